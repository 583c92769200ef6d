"""Sensor stream parsing, regridding, frame alignment and static/dynamic split.

The wire format is NDJSON, one frame per line:

    {"sid": "G", "t0": 1617753600000, "rate": 64,
     "ax": [...], "ay": [...], "az": [...]}          accelerometer, m/s^2
    {"sid": "I1", "t0": 1617753600000, "rate": 128, "v": [...]}   gauge, mm

Sample ticks live on the nominal grid of each sensor (tick = round(t0 *
rate / 1000)); timestamps from the logger are trusted and snapped, no drift
estimation is attempted.

Global frame convention: x longitudinal (positive south), y lateral
(positive east), z vertical (positive down), right-handed.  A level sensor
at rest reads (0, 0, -g) after alignment; positive pitch therefore means
leaning toward south, positive roll toward east.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import GRAVITY
from .errors import (
    CalibrationError,
    FrameDataError,
    FrameParseError,
    FrameSchemaError,
    InsufficientDataError,
    NotAtRestError,
    OrderingError,
)

ORTHO_TOL = 1e-9

SENSOR_KINDS = ("accelerometer", "gap_gauge", "distance_gauge")


@dataclass(frozen=True)
class SensorLocation:
    section: float          # decimal section label, 1.0 (north) .. 8.0 (south)
    side: str               # "H" (west), "V" (east) or "mid"
    elevation_index: int    # 1 = deck, 2 = column, 3 = foundation


@dataclass(frozen=True)
class SensorMeta:
    """Static configuration of one physical sensor.

    ``orientation`` rotates local sensor axes into the bridge global frame
    (row-major 3x3, orthonormal with det +1).  ``bias`` is subtracted in the
    local frame before rotation: a 3-vector in m/s^2 for accelerometers, a
    scalar in mm for gauges.
    """

    sensor_id: str
    kind: str
    sample_rate: int
    location: SensorLocation
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    bias: np.ndarray | float = 0.0

    def __post_init__(self):
        if self.kind not in SENSOR_KINDS:
            raise CalibrationError(f"unknown sensor kind {self.kind!r}")
        if self.sample_rate <= 0:
            raise CalibrationError(f"sample_rate must be > 0, got {self.sample_rate}")
        r = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "orientation", r)
        check_orthonormal(r)
        if self.kind == "accelerometer":
            b = np.asarray(self.bias, dtype=float).reshape(3)
            object.__setattr__(self, "bias", b)
        else:
            object.__setattr__(self, "bias", float(np.asarray(self.bias).reshape(())))

    @property
    def is_triaxial(self) -> bool:
        return self.kind == "accelerometer"


def check_orthonormal(r: np.ndarray) -> None:
    """Raise CalibrationError unless r is a proper rotation within ORTHO_TOL."""
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise CalibrationError("orientation must be a finite 3x3 matrix")
    err = np.max(np.abs(r.T @ r - np.eye(3)))
    if err > ORTHO_TOL:
        raise CalibrationError(f"orientation not orthonormal (max |R'R - I| = {err:.3g})")
    det = float(np.linalg.det(r))
    if abs(det - 1.0) > ORTHO_TOL:
        raise CalibrationError(f"orientation must have det +1, got {det!r}")


def load_sensors(path: str | Path) -> dict[str, SensorMeta]:
    """Read a sensors.json array file into a sensor_id -> SensorMeta map."""
    raw = json.loads(Path(path).read_text())
    out: dict[str, SensorMeta] = {}
    for row in raw:
        loc = row["location"]
        meta = SensorMeta(
            sensor_id=row["sensor_id"],
            kind=row["kind"],
            sample_rate=int(row["sample_rate"]),
            location=SensorLocation(
                section=float(loc["section"]),
                side=str(loc["side"]),
                elevation_index=int(loc["elevation_index"]),
            ),
            orientation=np.asarray(row.get("orientation", np.eye(3).ravel().tolist()), dtype=float).reshape(3, 3),
            bias=row.get("bias", [0.0, 0.0, 0.0] if row["kind"] == "accelerometer" else 0.0),
        )
        out[meta.sensor_id] = meta
    return out


def dump_sensors(metas: Iterable[SensorMeta], path: str | Path) -> None:
    rows = []
    for m in metas:
        rows.append({
            "sensor_id": m.sensor_id,
            "kind": m.kind,
            "sample_rate": m.sample_rate,
            "location": {
                "section": m.location.section,
                "side": m.location.side,
                "elevation_index": m.location.elevation_index,
            },
            "orientation": np.asarray(m.orientation).ravel().tolist(),
            "bias": m.bias.tolist() if isinstance(m.bias, np.ndarray) else m.bias,
        })
    Path(path).write_text(json.dumps(rows, indent=1))


# ---------------------------------------------------------------------------
# Frames

@dataclass
class Frame:
    """One timestamped micro-batch of raw samples from a single channel."""

    sensor_id: str
    start_time: int            # epoch milliseconds
    samples: np.ndarray        # (n, 3) accelerometer m/s^2 or (n,) gauge mm
    nominal_rate: int

    @property
    def end_time(self) -> float:
        """Implied end, epoch ms."""
        return self.start_time + len(self.samples) * 1000.0 / self.nominal_rate

    def start_tick(self) -> int:
        return int(round(self.start_time * self.nominal_rate / 1000.0))


def parse_frame(line: str | bytes) -> Frame:
    """Decode one NDJSON frame line.

    Unknown fields are ignored.  Raises FrameParseError on malformed JSON,
    FrameSchemaError on a missing/ill-typed field and FrameDataError (naming
    the sample index) on non-finite samples.
    """
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FrameParseError(f"malformed frame line: {e}") from e
    if not isinstance(obj, dict):
        raise FrameSchemaError("frame line must be a JSON object")
    for key in ("sid", "t0", "rate"):
        if key not in obj:
            raise FrameSchemaError(f"frame missing required field {key!r}")
    sid = obj["sid"]
    if not isinstance(sid, str) or not sid:
        raise FrameSchemaError("sid must be a non-empty string")
    try:
        t0 = int(obj["t0"])
        rate = int(obj["rate"])
    except (TypeError, ValueError) as e:
        raise FrameSchemaError(f"t0/rate must be integers: {e}") from e
    if rate <= 0:
        raise FrameSchemaError("rate must be positive")

    if "v" in obj:
        samples = np.asarray(obj["v"], dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise FrameSchemaError("gauge field 'v' must be a non-empty array")
    else:
        for key in ("ax", "ay", "az"):
            if key not in obj:
                raise FrameSchemaError(f"accelerometer frame missing field {key!r}")
        ax = np.asarray(obj["ax"], dtype=float)
        ay = np.asarray(obj["ay"], dtype=float)
        az = np.asarray(obj["az"], dtype=float)
        if not (ax.shape == ay.shape == az.shape) or ax.ndim != 1 or ax.size == 0:
            raise FrameSchemaError("ax/ay/az must be non-empty arrays of equal length")
        samples = np.stack([ax, ay, az], axis=1)

    finite = np.all(np.isfinite(samples), axis=1) if samples.ndim == 2 else np.isfinite(samples)
    bad = np.flatnonzero(~finite)
    if bad.size:
        raise FrameDataError(f"non-finite sample at index {int(bad[0])} in frame "
                             f"{sid}@{t0}")
    return Frame(sensor_id=sid, start_time=t0, samples=samples, nominal_rate=rate)


def frame_to_json(frame: Frame) -> str:
    """Inverse of parse_frame, used by the simulator and replay tooling."""
    if frame.samples.ndim == 2:
        body = {"sid": frame.sensor_id, "t0": frame.start_time, "rate": frame.nominal_rate,
                "ax": frame.samples[:, 0].tolist(),
                "ay": frame.samples[:, 1].tolist(),
                "az": frame.samples[:, 2].tolist()}
    else:
        body = {"sid": frame.sensor_id, "t0": frame.start_time, "rate": frame.nominal_rate,
                "v": frame.samples.tolist()}
    return json.dumps(body)


# ---------------------------------------------------------------------------
# Gridded series

@dataclass
class GridSeries:
    """Samples of one sensor placed on its nominal tick grid.

    Sample i sits at time (start_tick + i) / rate seconds.  gap_mask marks
    interpolated or zero-filled ticks that carried no real measurement.
    """

    sensor_id: str
    rate: int
    start_tick: int
    values: np.ndarray        # (n, 3) or (n,)
    gap_mask: np.ndarray      # (n,) bool, True = gap

    @property
    def start_time_ms(self) -> float:
        return self.start_tick * 1000.0 / self.rate

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class GlobalSeries:
    """Tri-axial series rotated into the bridge global frame."""

    sensor_id: str
    rate: int
    start_tick: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    gap_mask: np.ndarray

    @property
    def start_time_ms(self) -> float:
        return self.start_tick * 1000.0 / self.rate

    def __len__(self) -> int:
        return len(self.x)

    def stack(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.z], axis=1)


def regrid(frames: Sequence[Frame], meta: SensorMeta, max_gap_s: float = 0.5) -> GridSeries:
    """Place frames on the nominal grid, bridging holes.

    Holes up to max_gap_s are linearly interpolated and masked; larger holes
    are masked and zero-filled.  Frames must be sorted and non-overlapping.
    """
    if not frames:
        raise InsufficientDataError("regrid needs at least one frame")
    rate = meta.sample_rate
    max_gap_ticks = int(round(max_gap_s * rate))

    placed: list[tuple[int, np.ndarray]] = []
    prev_end = None
    for f in frames:
        if f.sensor_id != meta.sensor_id:
            raise OrderingError(f"frame for {f.sensor_id!r} fed to {meta.sensor_id!r}")
        tick = int(round(f.start_time * rate / 1000.0))
        if prev_end is not None and tick < prev_end:
            raise OrderingError(
                f"overlapping frames for {meta.sensor_id}: tick {tick} < {prev_end}")
        placed.append((tick, np.asarray(f.samples, dtype=float)))
        prev_end = tick + len(f.samples)

    start = placed[0][0]
    end = placed[-1][0] + len(placed[-1][1])
    n = end - start
    shape = (n,) + placed[0][1].shape[1:]
    values = np.zeros(shape, dtype=float)
    mask = np.ones(n, dtype=bool)

    for tick, samples in placed:
        i = tick - start
        values[i:i + len(samples)] = samples
        mask[i:i + len(samples)] = False

    # bridge short holes between consecutive frames
    for (t0, s0), (t1, s1) in zip(placed, placed[1:]):
        gap0 = t0 + len(s0) - start
        gap1 = t1 - start
        g = gap1 - gap0
        if 0 < g <= max_gap_ticks:
            w = (np.arange(1, g + 1) / (g + 1.0))
            left, right = s0[-1], s1[0]
            if values.ndim == 2:
                values[gap0:gap1] = left[None, :] * (1.0 - w)[:, None] + right[None, :] * w[:, None]
            else:
                values[gap0:gap1] = left * (1.0 - w) + right * w
    return GridSeries(meta.sensor_id, rate, start, values, mask)


def align_to_global(series: GridSeries, meta: SensorMeta) -> GlobalSeries:
    """Rotate bias-corrected local samples into the global frame.

    v_global = R . (v_local - bias).  The gap mask passes through unchanged.
    Gauges only get scalar bias removal (they carry no orientation).
    """
    if not meta.is_triaxial:
        vals = series.values - meta.bias
        return GlobalSeries(series.sensor_id, series.rate, series.start_tick,
                            vals, np.zeros_like(vals), np.zeros_like(vals),
                            series.gap_mask.copy())
    check_orthonormal(meta.orientation)
    v = (series.values - meta.bias[None, :]) @ meta.orientation.T
    return GlobalSeries(series.sensor_id, series.rate, series.start_tick,
                        np.ascontiguousarray(v[:, 0]),
                        np.ascontiguousarray(v[:, 1]),
                        np.ascontiguousarray(v[:, 2]),
                        series.gap_mask.copy())


# ---------------------------------------------------------------------------
# Static / dynamic split

@dataclass
class StaticDynamicSplit:
    """Per-window static means plus the full-rate zero-mean dynamic residual.

    Windows are wall-clock aligned (window start tick is a multiple of
    window_s * rate) so any stream covering the same samples reproduces the
    same statics, which is what makes event snapshots byte-reproducible.
    static[i] + dynamic over window i reconstructs the input exactly at
    non-gap samples.
    """

    window_s: float
    static_ticks: np.ndarray      # (m,) start tick of each window
    static: np.ndarray            # (m, 3) window means, m/s^2
    static_mask: np.ndarray       # (m,) True when window was fully masked
    dynamic: GlobalSeries


def split_static_dynamic(g: GlobalSeries, window_s: float = 10.0) -> StaticDynamicSplit:
    """Split a global series into gravity/inclination statics and dynamics."""
    wlen = int(round(window_s * g.rate))
    if wlen < 2:
        raise InsufficientDataError("window_s * rate must be >= 2")
    n = len(g)
    if n < 1:
        raise InsufficientDataError("empty series")

    v = g.stack()
    first_win = g.start_tick // wlen
    last_win = (g.start_tick + n - 1) // wlen
    nwin = last_win - first_win + 1

    static = np.zeros((nwin, 3))
    static_mask = np.zeros(nwin, dtype=bool)
    dynamic = np.empty_like(v)
    ticks = (first_win + np.arange(nwin)) * wlen

    prev = np.zeros(3)
    for w in range(nwin):
        a = max(ticks[w] - g.start_tick, 0)
        b = min(ticks[w] + wlen - g.start_tick, n)
        seg = v[a:b]
        ok = ~g.gap_mask[a:b]
        if ok.any():
            mean = seg[ok].mean(axis=0)
        else:
            mean = prev            # fully masked: hold last good static
            static_mask[w] = True
        static[w] = mean
        dynamic[a:b] = seg - mean
        prev = mean

    dyn = GlobalSeries(g.sensor_id, g.rate, g.start_tick,
                       np.ascontiguousarray(dynamic[:, 0]),
                       np.ascontiguousarray(dynamic[:, 1]),
                       np.ascontiguousarray(dynamic[:, 2]),
                       g.gap_mask.copy())
    return StaticDynamicSplit(window_s, ticks, static, static_mask, dyn)


# ---------------------------------------------------------------------------
# Inclination

def extract_inclination(static_vec: np.ndarray) -> tuple[float, float]:
    """Pitch (about y) and roll (about x) in degrees from a static vector.

    The at-rest, level reading is (0, 0, -g): the accelerometer senses the
    reaction to gravity with z positive down.  Requires |static| within
    [0.5 g, 1.5 g]; anything else means the window was dominated by motion.
    """
    s = np.asarray(static_vec, dtype=float).reshape(3)
    mag = float(np.linalg.norm(s))
    if not (0.5 * GRAVITY <= mag <= 1.5 * GRAVITY):
        raise NotAtRestError(f"|static| = {mag:.4g} m/s^2 outside at-rest band")
    pitch = math.degrees(math.asin(min(1.0, max(-1.0, s[0] / mag))))
    roll = math.degrees(math.asin(min(1.0, max(-1.0, s[1] / mag))))
    return pitch, roll


@dataclass(frozen=True)
class InclinationBaseline:
    """Zero offsets (degrees) established over designated calm periods."""

    pitch_offset_deg: float = 0.0
    roll_offset_deg: float = 0.0


def calibrate_inclination_baseline(
    records: Sequence[tuple[float, float, float]],
    calm_windows: Sequence[tuple[float, float]],
) -> InclinationBaseline:
    """Mean pitch/roll over calm windows becomes the zero reference.

    records are (time_s, pitch_deg, roll_deg) tuples; each calm window
    [t0, t1) must contain at least one record.
    """
    if not calm_windows:
        raise CalibrationError("no calm windows configured")
    picked_p: list[float] = []
    picked_r: list[float] = []
    for (t0, t1) in calm_windows:
        hits = [(p, r) for (t, p, r) in records if t0 <= t < t1]
        if not hits:
            raise CalibrationError(f"calm window [{t0}, {t1}) holds no inclination records")
        picked_p.extend(p for p, _ in hits)
        picked_r.extend(r for _, r in hits)
    return InclinationBaseline(float(np.mean(picked_p)), float(np.mean(picked_r)))

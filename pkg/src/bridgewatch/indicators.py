"""Low-resolution vibration indicators and their lossless aggregation.

Two indicators are computed per direction over wall-clock aligned windows
(default one second) of the dynamic signal:

* energy response (ERI): mean absolute acceleration, m/s^2;
* energy characteristics (ECI): mean absolute first difference divided by
  mean absolute value, dimensionless in [0, 2].  0 corresponds to a
  quiescent / free-fall signal, 2 to an oscillation at half the sample
  rate; for a pure sampled sinusoid ECI = 2 sin(pi f / Fs).

A Euclidean ERI over the full 3-D acceleration vector is kept alongside.

Sums are quantised to integer nano-units (1e-9 m/s^2 * count) so that
aggregation is exact integer addition: re-aggregating any partition of a
record set reproduces identical bytes.  The quantisation step is far below
sensor noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import AggregationError, InsufficientDataError
from .signals import GlobalSeries, InclinationBaseline, StaticDynamicSplit, extract_inclination
from .errors import NotAtRestError

NANO = 10 ** 9
DIRECTIONS = ("x", "y", "z")
EUCLID = "e"


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(values, dtype=float) * NANO).astype(np.int64)


def nano_to_str(n: int) -> str:
    """Exact decimal rendering of a nano-unit integer."""
    sign = "-" if n < 0 else ""
    n = abs(int(n))
    return f"{sign}{n // NANO}.{n % NANO:09d}"


def str_to_nano(s: str) -> int:
    s = s.strip()
    sign = -1 if s.startswith("-") else 1
    s = s.lstrip("+-")
    whole, _, frac = s.partition(".")
    frac = (frac + "000000000")[:9]
    return sign * (int(whole or "0") * NANO + int(frac or "0"))


# ---------------------------------------------------------------------------
# Scalar window operations

def eri(dyn: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean absolute value over unmasked samples."""
    a = np.asarray(dyn, dtype=float)
    ok = np.ones(len(a), bool) if mask is None else ~np.asarray(mask, bool)
    if ok.sum() < 2:
        raise InsufficientDataError("eri needs >= 2 unmasked samples")
    return float(np.mean(np.abs(a[ok])))


def eci(dyn: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean |first difference| over unmasked pairs, divided by mean |value|.

    Clamped to [0, 2]; a window with mean |value| below 1e-12 scores 0
    (free-fall / quiescent convention).
    """
    a = np.asarray(dyn, dtype=float)
    ok = np.ones(len(a), bool) if mask is None else ~np.asarray(mask, bool)
    if ok.sum() < 2:
        raise InsufficientDataError("eci needs >= 2 unmasked samples")
    denom = float(np.mean(np.abs(a[ok])))
    pair_ok = ok[1:] & ok[:-1]
    if not pair_ok.any():
        raise InsufficientDataError("eci needs at least one unmasked consecutive pair")
    if denom < 1e-12:
        return 0.0
    num = float(np.mean(np.abs(np.diff(a))[pair_ok]))
    return min(2.0, max(0.0, num / denom))


def euclid_eri(dyn3: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean Euclidean norm of the 3-D acceleration over unmasked samples."""
    v = np.asarray(dyn3, dtype=float)
    ok = np.ones(len(v), bool) if mask is None else ~np.asarray(mask, bool)
    if ok.sum() < 2:
        raise InsufficientDataError("euclid_eri needs >= 2 unmasked samples")
    return float(np.mean(np.linalg.norm(v[ok], axis=1)))


# ---------------------------------------------------------------------------
# Record batches

@dataclass(frozen=True)
class IndicatorRecord:
    """One window's indicators for one sensor (all directions)."""

    sensor_id: str
    window_start: int      # epoch seconds
    window_len: int        # seconds
    eri: dict              # direction -> m/s^2  (keys x, y, z)
    eci: dict              # direction -> dimensionless
    sum_abs: dict          # direction -> nano m/s^2 * count (int)
    sum_abs_diff: dict     # direction -> nano m/s^2 * count (int)
    euclid_eri: float
    euclid_sum_abs: int
    sample_count: int
    max_eri: dict          # direction (incl. "e") -> max member window eri


class IndicatorBatch:
    """Columnar container for IndicatorRecords of one sensor.

    Batches keep numpy columns so month-scale streams stay cheap; iterating
    yields IndicatorRecord views.
    """

    __slots__ = ("sensor_id", "window_len", "ts", "count",
                 "sum_abs", "sum_abs_diff", "euclid_sum", "max_eri", "aggregated")

    def __init__(self, sensor_id: str, window_len: int, ts: np.ndarray,
                 count: np.ndarray, sum_abs: dict, sum_abs_diff: dict,
                 euclid_sum: np.ndarray, max_eri: dict | None = None,
                 aggregated: bool = False):
        self.sensor_id = sensor_id
        self.window_len = int(window_len)
        self.aggregated = bool(aggregated)
        self.ts = np.asarray(ts, dtype=np.int64)
        self.count = np.asarray(count, dtype=np.int64)
        self.sum_abs = {d: np.asarray(sum_abs[d], dtype=np.int64) for d in DIRECTIONS}
        self.sum_abs_diff = {d: np.asarray(sum_abs_diff[d], dtype=np.int64) for d in DIRECTIONS}
        self.euclid_sum = np.asarray(euclid_sum, dtype=np.int64)
        if max_eri is None:
            max_eri = {d: self.eri(d) for d in DIRECTIONS}
            max_eri[EUCLID] = self.eri(EUCLID)
        self.max_eri = {d: np.asarray(v, dtype=float) for d, v in max_eri.items()}

    def __len__(self) -> int:
        return len(self.ts)

    def eri(self, direction: str) -> np.ndarray:
        s = self.euclid_sum if direction == EUCLID else self.sum_abs[direction]
        return s / (self.count * float(NANO))

    def eci(self, direction: str) -> np.ndarray:
        # native windows normalise the pair mean by the pair count; aggregates
        # reuse the additive sums directly, the clamp absorbing the O(1/N) gap
        if direction == EUCLID:
            return np.zeros(len(self), dtype=float)
        denom = self.sum_abs[direction].astype(float)
        if self.aggregated:
            scale = 1.0
        else:
            pairs = np.maximum(self.count - 1, 1).astype(float)
            scale = self.count.astype(float) / pairs
        with np.errstate(divide="ignore", invalid="ignore"):
            val = scale * self.sum_abs_diff[direction] / denom
        val = np.where(denom < 1.0, 0.0, val)   # quantised-to-zero mean: quiescent
        return np.clip(val, 0.0, 2.0)

    def value(self, direction: str, indicator: str) -> np.ndarray:
        if indicator == "eri":
            return self.eri(direction)
        if indicator == "eci":
            return self.eci(direction)
        if indicator == "euclid_eri":
            return self.eri(EUCLID)
        raise KeyError(indicator)

    def record(self, i: int) -> IndicatorRecord:
        return IndicatorRecord(
            sensor_id=self.sensor_id,
            window_start=int(self.ts[i]),
            window_len=self.window_len,
            eri={d: float(self.eri(d)[i]) for d in DIRECTIONS},
            eci={d: float(self.eci(d)[i]) for d in DIRECTIONS},
            sum_abs={d: int(self.sum_abs[d][i]) for d in DIRECTIONS},
            sum_abs_diff={d: int(self.sum_abs_diff[d][i]) for d in DIRECTIONS},
            euclid_eri=float(self.eri(EUCLID)[i]),
            euclid_sum_abs=int(self.euclid_sum[i]),
            sample_count=int(self.count[i]),
            max_eri={d: float(self.max_eri[d][i]) for d in self.max_eri},
        )

    def __iter__(self) -> Iterator[IndicatorRecord]:
        return (self.record(i) for i in range(len(self)))

    @staticmethod
    def concat(batches: Sequence["IndicatorBatch"]) -> "IndicatorBatch":
        batches = [b for b in batches if len(b)]
        if not batches:
            raise InsufficientDataError("nothing to concatenate")
        first = batches[0]
        if any(b.sensor_id != first.sensor_id or b.window_len != first.window_len for b in batches):
            raise AggregationError("cannot concat batches of mixed sensor/window_len")
        return IndicatorBatch(
            first.sensor_id, first.window_len,
            np.concatenate([b.ts for b in batches]),
            np.concatenate([b.count for b in batches]),
            {d: np.concatenate([b.sum_abs[d] for b in batches]) for d in DIRECTIONS},
            {d: np.concatenate([b.sum_abs_diff[d] for b in batches]) for d in DIRECTIONS},
            np.concatenate([b.euclid_sum for b in batches]),
            {d: np.concatenate([b.max_eri[d] for b in batches]) for d in first.max_eri},
            aggregated=first.aggregated,
        )


def window_indicators(g: GlobalSeries, window_len: int = 1) -> IndicatorBatch:
    """Reduce a dynamic global series to per-window indicator records.

    Only windows fully covered by the series and free of masked samples
    produce a record; a second containing any gap is skipped entirely.
    Output is deterministic for identical input.
    """
    rate = g.rate
    wticks = rate * window_len
    n = len(g)
    first = -(-g.start_tick // wticks)               # ceil division
    last = (g.start_tick + n) // wticks              # exclusive
    if last <= first:
        return _empty_batch(g.sensor_id, window_len)

    nwin = last - first
    offs = first * wticks - g.start_tick
    idx = offs + np.arange(nwin)[:, None] * wticks + np.arange(wticks)[None, :]

    keep = ~g.gap_mask[idx].any(axis=1)
    if not keep.any():
        return _empty_batch(g.sensor_id, window_len)
    idx = idx[keep]

    sig = {"x": g.x[idx], "y": g.y[idx], "z": g.z[idx]}
    norms = np.sqrt(sig["x"] ** 2 + sig["y"] ** 2 + sig["z"] ** 2)

    sum_abs = {d: _quantize(np.abs(sig[d]).sum(axis=1)) for d in DIRECTIONS}
    sum_abs_diff = {d: _quantize(np.abs(np.diff(sig[d], axis=1)).sum(axis=1))
                    for d in DIRECTIONS}
    euclid = _quantize(norms.sum(axis=1))
    # the norm sum can never fall below a component sum; reconcile the
    # (at most 1-nano) float rounding so the dominance invariant is exact
    euclid = np.maximum(euclid, np.maximum.reduce([sum_abs[d] for d in DIRECTIONS]))

    ts = (first + np.flatnonzero(keep)) * window_len  # window grid is epoch-aligned
    count = np.full(len(idx), wticks, dtype=np.int64)
    return IndicatorBatch(g.sensor_id, window_len, ts, count, sum_abs, sum_abs_diff, euclid)


def _empty_batch(sensor_id: str, window_len: int) -> IndicatorBatch:
    z = np.zeros(0, dtype=np.int64)
    return IndicatorBatch(sensor_id, window_len, z, z,
                          {d: z for d in DIRECTIONS}, {d: z for d in DIRECTIONS}, z)


def slice_batch(b: IndicatorBatch, idx: np.ndarray) -> IndicatorBatch:
    """Row subset (or reordering) of a batch by integer index array."""
    return IndicatorBatch(
        b.sensor_id, b.window_len, b.ts[idx], b.count[idx],
        {d: b.sum_abs[d][idx] for d in DIRECTIONS},
        {d: b.sum_abs_diff[d][idx] for d in DIRECTIONS},
        b.euclid_sum[idx],
        {d: b.max_eri[d][idx] for d in b.max_eri},
        aggregated=b.aggregated,
    )


def aggregate(batch: IndicatorBatch, target_len: int) -> IndicatorBatch:
    """Fold records into coarser windows by exact integer addition.

    target_len must be a multiple of the batch window length.  The
    aggregate ERI is sum_abs/count; the aggregate ECI is
    sum_abs_diff/sum_abs clamped to [0, 2].  max_eri carries the largest
    member window ERI for maxima views.
    """
    if target_len % batch.window_len != 0:
        raise AggregationError(
            f"target {target_len}s is not a multiple of window {batch.window_len}s")
    if target_len == batch.window_len or len(batch) == 0:
        return batch

    bucket = (batch.ts // target_len) * target_len
    uniq, inv = np.unique(bucket, return_inverse=True)
    m = len(uniq)

    def isum(col: np.ndarray) -> np.ndarray:
        out = np.zeros(m, dtype=np.int64)
        np.add.at(out, inv, col)
        return out

    def fmax(col: np.ndarray) -> np.ndarray:
        out = np.full(m, -np.inf)
        np.maximum.at(out, inv, col)
        return out

    return IndicatorBatch(
        batch.sensor_id, target_len, uniq, isum(batch.count),
        {d: isum(batch.sum_abs[d]) for d in DIRECTIONS},
        {d: isum(batch.sum_abs_diff[d]) for d in DIRECTIONS},
        isum(batch.euclid_sum),
        {d: fmax(batch.max_eri[d]) for d in batch.max_eri},
        aggregated=True,
    )


# ---------------------------------------------------------------------------
# Inclination windows

@dataclass(frozen=True)
class InclinationRecord:
    sensor_id: str
    window_start: int     # epoch seconds
    window_len: int       # seconds, 300 by default
    pitch_deg: float      # relative to baseline
    roll_deg: float


def inclination_windows(
    split: StaticDynamicSplit,
    sensor_id: str,
    rate: int,
    baseline: InclinationBaseline | None = None,
    window_len: int = 300,
) -> list[InclinationRecord]:
    """Average pitch/roll per window of the static series, minus baseline.

    Static samples that fail the at-rest magnitude check are skipped; a
    window with no valid sample yields no record.
    """
    base = baseline or InclinationBaseline()
    angles = []
    for tick, vec, masked in zip(split.static_ticks, split.static, split.static_mask):
        if masked:
            continue
        try:
            p, r = extract_inclination(vec)
        except NotAtRestError:
            continue
        angles.append((tick / rate, p, r))
    if not angles:
        return []

    out: list[InclinationRecord] = []
    by_win: dict[int, list[tuple[float, float]]] = {}
    for t, p, r in angles:
        by_win.setdefault(int(t // window_len) * window_len, []).append((p, r))
    for w in sorted(by_win):
        ps, rs = zip(*by_win[w])
        out.append(InclinationRecord(sensor_id, w, window_len,
                                     float(np.mean(ps)) - base.pitch_offset_deg,
                                     float(np.mean(rs)) - base.roll_offset_deg))
    return out


# ---------------------------------------------------------------------------
# Row formats. CSV (one row per direction, "e" for the Euclidean vector):
#   ts,sensor,dir,eri,eci,sum_abs,sum_abs_diff,count
# The NDJSON equivalent carries the same fields per line.

CSV_HEADER = "ts,sensor,dir,eri,eci,sum_abs,sum_abs_diff,count"


def batch_to_ndjson(batch: IndicatorBatch) -> list[str]:
    """NDJSON lines equivalent to the CSV rows, exact sums as strings."""
    import json
    lines = []
    for row in batch_to_rows(batch):
        ts, sensor, d, eri_s, eci_s, sa, sd, cnt = row.split(",")
        lines.append(json.dumps({
            "ts": int(ts), "sensor": sensor, "dir": d,
            "eri": float(eri_s), "eci": float(eci_s),
            "sum_abs": sa, "sum_abs_diff": sd, "count": int(cnt),
        }))
    return lines


def batch_to_rows(batch: IndicatorBatch) -> list[str]:
    rows = []
    eris = {d: batch.eri(d) for d in DIRECTIONS + (EUCLID,)}
    ecis = {d: batch.eci(d) for d in DIRECTIONS}
    for i in range(len(batch)):
        ts, cnt = int(batch.ts[i]), int(batch.count[i])
        for d in DIRECTIONS:
            rows.append(f"{ts},{batch.sensor_id},{d},{float(eris[d][i])!r},"
                        f"{float(ecis[d][i])!r},"
                        f"{nano_to_str(int(batch.sum_abs[d][i]))},"
                        f"{nano_to_str(int(batch.sum_abs_diff[d][i]))},{cnt}")
        rows.append(f"{ts},{batch.sensor_id},{EUCLID},{float(eris[EUCLID][i])!r},0.0,"
                    f"{nano_to_str(int(batch.euclid_sum[i]))},0.000000000,{cnt}")
    return rows


def rows_to_batch(rows: Sequence[str], sensor_id: str, window_len: int = 1) -> IndicatorBatch:
    per_ts: dict[int, dict] = {}
    for row in rows:
        parts = row.split(",")
        ts, sensor, d = int(parts[0]), parts[1], parts[2]
        if sensor != sensor_id:
            continue
        slot = per_ts.setdefault(ts, {"count": int(parts[7])})
        if d == EUCLID:
            slot["e"] = str_to_nano(parts[5])
        else:
            slot[d] = (str_to_nano(parts[5]), str_to_nano(parts[6]))
    ts_sorted = sorted(per_ts)
    z = np.zeros(len(ts_sorted), dtype=np.int64)
    sum_abs = {d: z.copy() for d in DIRECTIONS}
    sum_abs_diff = {d: z.copy() for d in DIRECTIONS}
    euclid = z.copy()
    count = z.copy()
    for i, t in enumerate(ts_sorted):
        slot = per_ts[t]
        count[i] = slot["count"]
        euclid[i] = slot.get("e", 0)
        for d in DIRECTIONS:
            sa, sd = slot.get(d, (0, 0))
            sum_abs[d][i] = sa
            sum_abs_diff[d][i] = sd
    return IndicatorBatch(sensor_id, window_len, np.asarray(ts_sorted, dtype=np.int64),
                          count, sum_abs, sum_abs_diff, euclid)

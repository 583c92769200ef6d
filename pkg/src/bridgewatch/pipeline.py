"""End-to-end flow: frames -> align/split -> indicators -> store -> alerts.

Replay and live mode share one code path: frames are consumed in time
order, buffered per sensor, and a wall-aligned processing chunk closes
once the stream watermark passes its end (a frame arriving with start at
or beyond chunk end + watermark seconds), or the source ends.  Late frames
behind the watermark are logged and dropped.  Store appends are
idempotent, so a restart from the periodic checkpoint never duplicates
records and a replay of the same input yields a byte-identical store.
"""

from __future__ import annotations

import json
import logging
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import alerting, anomaly
from . import indicators as ind
from .alerting import Alert, MtbaTracker, ThresholdPolicy
from .errors import ConfigError
from .indicators import IndicatorBatch, inclination_windows
from .signals import (
    Frame,
    GlobalSeries,
    InclinationBaseline,
    SensorMeta,
    align_to_global,
    load_sensors,
    parse_frame,
    regrid,
    split_static_dynamic,
)
from .store import RetentionRule, Store

log = logging.getLogger(__name__)

DEFAULT_FEATURE_SENSORS = ("G", "Q", "T")


@dataclass
class PipelineConfig:
    sensors_path: str
    store_path: str
    mode: str = "replay"                  # replay | live
    micro_batch_s: int = 1
    chunk_s: int = 60                     # processing granularity, multiple of split window
    split_window_s: float = 10.0
    max_gap_s: float = 0.5
    watermark_s: float = 2.0
    policies: list[ThresholdPolicy] = field(default_factory=list)
    thresholds_artifact: str | None = None
    iforest_model: str | None = None
    feature_sensors: tuple[str, ...] = DEFAULT_FEATURE_SENSORS
    retention: RetentionRule = field(default_factory=RetentionRule)
    snapshot_policies: tuple[str, ...] | None = None   # None = every policy
    mtba_window_s: float = 86400.0
    mtba_baseline_s: float = 86400.0
    mtba_ratio: float = 10.0
    mtba_min_alerts: int = 5
    manhattan_scopes: tuple[tuple[str, str], ...] | None = None
    manhattan_policy: str | None = None
    baseline: InclinationBaseline = field(default_factory=InclinationBaseline)
    checkpoint: bool = True

    def __post_init__(self):
        if self.micro_batch_s < 1:
            raise ConfigError("micro_batch_s must cover at least the indicator window (1 s)")
        if self.chunk_s % int(self.split_window_s) != 0:
            raise ConfigError("chunk_s must be a multiple of split_window_s")
        if self.mode not in ("replay", "live"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    @staticmethod
    def from_dict(d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        def _path(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() or base_dir is None else base_dir / p)

        ret = d.get("retention", {})
        mt = d.get("mtba", {})
        manh = d.get("manhattan") or {}
        base = d.get("baseline", {})
        return PipelineConfig(
            sensors_path=_path(d["sensors"]),
            store_path=_path(d["store"]),
            mode=d.get("mode", "replay"),
            micro_batch_s=int(d.get("micro_batch_s", 1)),
            chunk_s=int(d.get("chunk_s", 60)),
            split_window_s=float(d.get("split_window_s", 10.0)),
            max_gap_s=float(d.get("max_gap_s", 0.5)),
            watermark_s=float(d.get("watermark_s", 2.0)),
            policies=[ThresholdPolicy.from_dict(p) for p in d.get("policies", [])],
            thresholds_artifact=_path(d.get("thresholds_artifact")),
            iforest_model=_path(d.get("iforest_model")),
            feature_sensors=tuple(d.get("feature_sensors", DEFAULT_FEATURE_SENSORS)),
            retention=RetentionRule(
                pre_s=int(ret.get("pre_s", 30)), post_s=int(ret.get("post_s", 60)),
                raw_ttl_days=int(ret.get("raw_ttl_days", 7)),
                indicator_ttl_days=ret.get("indicator_ttl_days"),
                align_s=int(ret.get("align_s", d.get("split_window_s", 10))),
            ),
            snapshot_policies=tuple(d["snapshot_policies"]) if d.get("snapshot_policies") else None,
            mtba_window_s=float(mt.get("window_s", 86400.0)),
            mtba_baseline_s=float(mt.get("baseline_s", 86400.0)),
            mtba_ratio=float(mt.get("ratio", 10.0)),
            mtba_min_alerts=int(mt.get("min_alerts", 5)),
            manhattan_scopes=tuple((s, dd) for s, dd in manh["scopes"]) if manh.get("scopes") else None,
            manhattan_policy=manh.get("policy"),
            baseline=InclinationBaseline(float(base.get("pitch_deg", 0.0)),
                                         float(base.get("roll_deg", 0.0))),
            checkpoint=bool(d.get("checkpoint", True)),
        )

    @staticmethod
    def load(path: str | Path) -> "PipelineConfig":
        p = Path(path)
        return PipelineConfig.from_dict(json.loads(p.read_text()), base_dir=p.parent)


# ---------------------------------------------------------------------------
# Frame sources

def file_source(path: str | Path) -> Iterator[Frame]:
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield parse_frame(line)


def tcp_source(host: str, port: int) -> Iterator[Frame]:
    """Accept one connection and stream NDJSON frame lines until EOF."""
    srv = socket.create_server((host, port))
    try:
        conn, addr = srv.accept()
        log.info("live source connected from %s", addr)
        buf = b""
        with conn:
            while True:
                data = conn.recv(1 << 16)
                if not data:
                    break
                buf += data
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        yield parse_frame(line)
    finally:
        srv.close()


# ---------------------------------------------------------------------------
# Run result

@dataclass
class RunResult:
    frames: int = 0
    dropped_late: int = 0
    records: int = 0
    alerts: int = 0
    anomalies: int = 0
    snapshots: int = 0
    escalations: list = field(default_factory=list)
    chunk_latency_s: list = field(default_factory=list)

    @property
    def escalation_active(self) -> bool:
        return bool(self.escalations)


@dataclass
class _PendingSnapshot:
    trigger_time: int
    trigger: dict


class _InclinationAccumulator:
    """Collects split statics until full five-minute windows close."""

    def __init__(self, window_len: int = 300):
        self.window_len = window_len
        self.pending: dict[str, list] = {}

    def add(self, sensor_id: str, rate: int, split) -> None:
        self.pending.setdefault(sensor_id, []).append((rate, split))

    def drain(self, sensor_id: str, upto_s: int, baseline: InclinationBaseline) -> list:
        """Records for windows fully before upto_s; retains the rest."""
        items = self.pending.get(sensor_id, [])
        if not items:
            return []
        rate = items[0][0]
        ticks = np.concatenate([s.static_ticks for _, s in items])
        static = np.vstack([s.static for _, s in items])
        mask = np.concatenate([s.static_mask for _, s in items])

        cut = int(upto_s // self.window_len) * self.window_len
        done = ticks < cut * rate
        from .signals import StaticDynamicSplit

        if done.any():
            sp = StaticDynamicSplit(0.0, ticks[done], static[done], mask[done], None)
            recs = inclination_windows(sp, sensor_id, rate, baseline, self.window_len)
        else:
            recs = []
        keep = ~done
        if keep.any():
            sp_keep = StaticDynamicSplit(0.0, ticks[keep], static[keep], mask[keep], None)
            self.pending[sensor_id] = [(rate, sp_keep)]
        else:
            self.pending[sensor_id] = []
        return recs


class Pipeline:
    """Single-process orchestrator over a time-ordered frame stream."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.sensors: dict[str, SensorMeta] = load_sensors(config.sensors_path)
        self.store = Store(config.store_path)
        self.limits: dict[str, dict] = {}
        if config.thresholds_artifact and Path(config.thresholds_artifact).exists():
            self.limits = alerting.load_limits(config.thresholds_artifact)
        for policy in config.policies:
            if policy.fixed_value is not None:
                scopes = policy.scopes or [
                    (sid, "e" if policy.indicator == "euclid_eri" else d)
                    for sid, m in self.sensors.items() if m.kind == "accelerometer"
                    for d in (("e",) if policy.indicator == "euclid_eri" else ("x", "y", "z"))
                ]
                self.limits.setdefault(policy.name, {})
                for scope in scopes:
                    self.limits[policy.name][scope] = float(policy.fixed_value)
        self.model = None
        if config.iforest_model and Path(config.iforest_model).exists():
            self.model = anomaly.IsolationForestModel.load(config.iforest_model)
        self.mtba = MtbaTracker(config.mtba_window_s, config.mtba_baseline_s,
                                config.mtba_ratio, config.mtba_min_alerts)

    # -- checkpointing -----------------------------------------------------

    def _checkpoint_path(self) -> Path:
        return self.store.artifact_path("checkpoint.json")

    def _load_checkpoint(self) -> int | None:
        p = self._checkpoint_path()
        if self.config.checkpoint and p.exists():
            return int(json.loads(p.read_text())["last_closed_chunk"])
        return None

    def _save_checkpoint(self, chunk_start: int) -> None:
        if self.config.checkpoint:
            self.store.write_artifact("checkpoint.json",
                                      json.dumps({"last_closed_chunk": chunk_start}))

    # -- main loop -----------------------------------------------------------

    def run(self, source: Iterable[Frame], resume: bool = False) -> RunResult:
        cfg = self.config
        result = RunResult()
        chunk = cfg.chunk_s
        buffers: dict[str, list[Frame]] = {}
        ring: dict[str, list[GlobalSeries]] = {}
        ring_span = cfg.retention.pre_s + cfg.retention.post_s + 60
        batch_ring: dict[str, list[IndicatorBatch]] = {}
        incl = _InclinationAccumulator()
        pending_snaps: list[_PendingSnapshot] = []
        open_chunk: int | None = None
        done_upto = self._load_checkpoint() if resume else None

        def process_chunk(chunk_start: int) -> None:
            t0 = time.monotonic()
            chunk_batches: dict[str, IndicatorBatch] = {}
            for sid in sorted(buffers):
                frames = [f for f in buffers[sid]
                          if chunk_start * 1000 <= f.start_time < (chunk_start + chunk) * 1000]
                buffers[sid] = [f for f in buffers[sid]
                                if f.start_time >= (chunk_start + chunk) * 1000]
                if not frames:
                    continue
                meta = self.sensors.get(sid)
                if meta is None:
                    log.warning("frames for unknown sensor %s dropped", sid)
                    continue
                grid = regrid(frames, meta, cfg.max_gap_s)
                g = align_to_global(grid, meta)
                self._append_raw_seconds(g, ring, ring_span)
                if meta.kind != "accelerometer":
                    continue
                split = split_static_dynamic(g, cfg.split_window_s)
                batch = ind.window_indicators(split.dynamic)
                result.records += self.store.append_indicators(batch)
                chunk_batches[sid] = batch
                batch_ring.setdefault(sid, []).append(batch)
                batch_ring[sid] = batch_ring[sid][-(ring_span // chunk + 2):]
                incl.add(sid, meta.sample_rate, split)
                self.store.append_inclination(
                    incl.drain(sid, chunk_start + chunk, cfg.baseline))

            alerts = self._evaluate(chunk_batches)
            if alerts:
                alerts.sort(key=lambda a: (a.time, a.sensor_id, a.direction, a.policy))
                self.store.append_alerts(alerts)
                result.alerts += len(alerts)
                flags = []
                for a in alerts:
                    flag = self.mtba.update(float(a.time))
                    if flag:
                        flags.append(flag)
                    if cfg.snapshot_policies is None or a.policy in cfg.snapshot_policies:
                        if not pending_snaps or a.time > pending_snaps[-1].trigger_time:
                            pending_snaps.append(_PendingSnapshot(
                                a.time, {"kind": "alert", "policy": a.policy,
                                         "sensor": a.sensor_id, "dir": a.direction}))
                if flags:
                    self.store.append_escalations(flags)
                    result.escalations.extend(flags)

            if self.model is not None and chunk_batches:
                result.anomalies += self._score_chunk(chunk_batches)

            watermark = chunk_start + chunk
            still_pending = []
            for snap in pending_snaps:
                if snap.trigger_time + cfg.retention.post_s <= watermark:
                    self.store.capture_snapshot(
                        snap.trigger_time, snap.trigger, cfg.retention,
                        {sid: rows for sid, rows in ring.items()},
                        [IndicatorBatch.concat(bs) for bs in batch_ring.values() if bs])
                    result.snapshots += 1
                else:
                    still_pending.append(snap)
            pending_snaps[:] = still_pending

            self._save_checkpoint(chunk_start)
            result.chunk_latency_s.append(time.monotonic() - t0)

        for frame in source:
            result.frames += 1
            start_s = frame.start_time / 1000.0
            chunk_start = int(start_s // chunk) * chunk
            if done_upto is not None and chunk_start <= done_upto:
                continue
            if open_chunk is None:
                open_chunk = chunk_start
            if chunk_start < open_chunk:
                result.dropped_late += 1
                log.info("late frame %s@%d dropped (watermark passed)",
                         frame.sensor_id, frame.start_time)
                continue
            # close chunks the watermark has passed
            while start_s >= open_chunk + chunk + cfg.watermark_s:
                process_chunk(open_chunk)
                open_chunk += chunk
            buffers.setdefault(frame.sensor_id, []).append(frame)

        if open_chunk is not None:
            while any(buffers.values()):
                process_chunk(open_chunk)
                remaining = [f.start_time // 1000 for fs in buffers.values() for f in fs]
                if remaining:
                    open_chunk = max(open_chunk + chunk,
                                     int(min(remaining) // chunk) * chunk)
                else:
                    open_chunk += chunk
            # flush inclination windows still open and snapshots still waiting
            for sid in sorted(self.sensors):
                recs = incl.drain(sid, 1 << 62, cfg.baseline)
                self.store.append_inclination(recs)
            for snap in pending_snaps:
                self.store.capture_snapshot(
                    snap.trigger_time, snap.trigger, cfg.retention,
                    {sid: rows for sid, rows in ring.items()},
                    [IndicatorBatch.concat(bs) for bs in batch_ring.values() if bs])
                result.snapshots += 1
        if result.chunk_latency_s:
            log.info("processed %d chunks, mean latency %.4fs, max %.4fs",
                     len(result.chunk_latency_s), float(np.mean(result.chunk_latency_s)),
                     float(np.max(result.chunk_latency_s)))
        return result

    def _append_raw_seconds(self, g: GlobalSeries, ring: dict, ring_span: int) -> None:
        rate = g.rate
        rows = []
        n_sec = len(g) // rate
        for s in range(n_sec):
            sl = slice(s * rate, (s + 1) * rate)
            rows.append(GlobalSeries(g.sensor_id, rate, g.start_tick + s * rate,
                                     g.x[sl], g.y[sl], g.z[sl], g.gap_mask[sl]))
        self.store.append_raw(rows)
        cur = ring.setdefault(g.sensor_id, [])
        cur.extend(rows)
        if len(cur) > ring_span:
            del cur[:len(cur) - ring_span]

    def _evaluate(self, chunk_batches: dict[str, IndicatorBatch]) -> list[Alert]:
        alerts: list[Alert] = []
        for policy in self.config.policies:
            limits = self.limits.get(policy.name)
            if not limits:
                continue
            if policy.scope == "manhattan":
                continue
            for batch in chunk_batches.values():
                alerts.extend(alerting.evaluate(batch, limits, policy))
        if self.config.manhattan_policy and self.config.manhattan_scopes:
            limits = self.limits.get(self.config.manhattan_policy, {})
            limit = limits.get(alerting.MANHATTAN_SCOPE)
            if limit is not None:
                ts, sums = alerting.manhattan_series(chunk_batches,
                                                     self.config.manhattan_scopes)
                alerts.extend(alerting.evaluate_series(ts, sums, limit,
                                                       self.config.manhattan_policy))
        return alerts

    def _score_chunk(self, chunk_batches: dict[str, IndicatorBatch]) -> int:
        ts, feats = feature_matrix(chunk_batches, self.config.feature_sensors)
        if len(ts) == 0:
            return 0
        flags = anomaly.score_stream(self.model, ts, feats)
        if flags:
            path = self.store.root / "alerts" / "anomalies.ndjson"
            with path.open("a") as fh:
                fh.write("\n".join(f.to_json() for f in flags) + "\n")
        return len(flags)

    # -- training -------------------------------------------------------------

    def backfill_train(self, t0: int, t1: int, psi: int = 256, n_trees: int = 100,
                       seed: int = 0) -> dict:
        """Calibrate thresholds and fit the anomaly model from stored records."""
        cfg = self.config
        sensors = [sid for sid, m in self.sensors.items() if m.kind == "accelerometer"]
        batches = {sid: self.store.query_indicators(sid, t0, t1) for sid in sensors}
        batches = {sid: b for sid, b in batches.items() if len(b)}
        if not batches:
            raise ConfigError(f"no indicator records stored in [{t0}, {t1})")

        limits_by_policy: dict[str, dict] = {}
        for policy in cfg.policies:
            if policy.fixed_value is not None:
                continue
            if policy.scope == "manhattan":
                continue
            training: dict = {}
            for b in batches.values():
                training.update(alerting.scope_values(b, policy.indicator))
            limits_by_policy[policy.name] = alerting.calibrate_thresholds(training, policy)
        if cfg.manhattan_policy and cfg.manhattan_scopes:
            ts, sums = alerting.manhattan_series(batches, cfg.manhattan_scopes)
            pol = next((p for p in cfg.policies if p.name == cfg.manhattan_policy), None)
            if pol is None:
                pol = ThresholdPolicy(cfg.manhattan_policy, scope="manhattan")
            lm = alerting.calibrate_thresholds({alerting.MANHATTAN_SCOPE: sums}, pol)
            limits_by_policy.setdefault(cfg.manhattan_policy, {}).update(lm)

        artifacts = {}
        if limits_by_policy:
            path = self.store.artifact_path("thresholds.json")
            alerting.dump_limits(limits_by_policy, path)
            artifacts["thresholds"] = str(path)
            self.limits.update(limits_by_policy)

        feat_batches = {s: b for s, b in batches.items() if s in cfg.feature_sensors}
        if len(feat_batches) == len(cfg.feature_sensors) and cfg.feature_sensors:
            ts, feats = feature_matrix(feat_batches, cfg.feature_sensors)
            model = anomaly.train(feats, psi=psi, n_trees=n_trees, seed=seed,
                                  feature_names=feature_names(cfg.feature_sensors))
            scores = anomaly.score(model, feats)
            anomaly.calibrate_score_threshold(model, scores)
            flags = anomaly.score_stream(model, ts, feats)
            model.training_daily_mean = anomaly.training_daily_mean(
                flags, int(t0 // 86400), int(-(-t1 // 86400)))
            path = self.store.artifact_path("iforest.json")
            self.store.write_artifact("iforest.json", model.to_json())
            artifacts["iforest"] = str(path)
            self.model = model
        return artifacts


def feature_names(sensors: Iterable[str]) -> list[str]:
    return [f"{s}.{d}.{k}" for s in sensors for d in ("x", "y", "z")
            for k in ("eri", "eci")]


def feature_matrix(batches: dict[str, IndicatorBatch],
                   sensors: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
    """(ts, features) for the seconds where every sensor has a record."""
    sensors = list(sensors)
    if any(s not in batches or len(batches[s]) == 0 for s in sensors):
        return np.zeros(0, dtype=np.int64), np.zeros((0, 6 * len(sensors)))
    common = None
    for s in sensors:
        ts = np.asarray(batches[s].ts)
        common = ts if common is None else np.intersect1d(common, ts)
    if common is None or len(common) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 6 * len(sensors)))
    cols = []
    for s in sensors:
        b = batches[s]
        idx = np.searchsorted(np.asarray(b.ts), common)
        for d in ("x", "y", "z"):
            cols.append(b.eri(d)[idx])
            cols.append(b.eci(d)[idx])
    return common.astype(np.int64), np.stack(cols, axis=1)

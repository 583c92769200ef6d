"""Percentile-calibrated thresholds, alert evaluation, MTBA tracking, reports.

Threshold presets express a statistically expected alert budget on
one-second records: roughly one per month (99.99995th percentile), one per
week (99.9998th) and eight per day (99.99th).  Limits come from the
nearest-rank empirical percentile of a training stream; alerting is
strictly greater-than, so a constant stream calibrated on itself never
alerts.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError, OrderingError
from .indicators import IndicatorBatch

log = logging.getLogger(__name__)

PERCENTILE_PRESETS = {
    "monthly": 0.9999995,
    "weekly": 0.999998,
    "daily8": 0.9999,
}

INDICATORS = ("eri", "eci", "euclid_eri")

# scope key: (sensor_id, direction) for per-sensor policies,
# ("*", "manhattan") for the summed vector
ScopeKey = tuple[str, str]
MANHATTAN_SCOPE: ScopeKey = ("*", "manhattan")


@dataclass(frozen=True)
class ThresholdPolicy:
    """One alerting rule: a percentile (or fixed limit) on one indicator."""

    name: str
    indicator: str = "eri"
    percentile: float | None = None
    fixed_value: float | None = None
    scope: str = "per"                       # "per" sensor/direction or "manhattan"
    scopes: tuple[ScopeKey, ...] | None = None   # restrict to these (sensor, dir)

    def __post_init__(self):
        if self.indicator not in INDICATORS and self.scope != "manhattan":
            raise ConfigError(f"unknown indicator {self.indicator!r}")
        pct = self.percentile
        if pct is None and self.name in PERCENTILE_PRESETS and self.fixed_value is None:
            object.__setattr__(self, "percentile", PERCENTILE_PRESETS[self.name])
            pct = self.percentile
        if (pct is None) == (self.fixed_value is None):
            raise ConfigError("exactly one of percentile/fixed_value must be set")
        if pct is not None and not (0.0 < pct < 1.0):
            raise ConfigError(f"percentile must be in (0, 1), got {pct}")

    @staticmethod
    def from_dict(d: Mapping) -> "ThresholdPolicy":
        scopes = d.get("scopes")
        return ThresholdPolicy(
            name=d["name"],
            indicator=d.get("indicator", "eri"),
            percentile=d.get("percentile"),
            fixed_value=d.get("fixed_value"),
            scope=d.get("scope", "per"),
            scopes=tuple((s, dd) for s, dd in scopes) if scopes else None,
        )


@dataclass(frozen=True)
class Alert:
    time: int                 # epoch seconds (window start)
    sensor_id: str            # "*" for manhattan
    direction: str            # x / y / z / e / manhattan
    indicator: str
    value: float
    limit: float
    policy: str

    def to_json(self) -> str:
        return json.dumps({"t": self.time, "sensor": self.sensor_id,
                           "dir": self.direction, "indicator": self.indicator,
                           "value": self.value, "limit": self.limit,
                           "policy": self.policy})

    @staticmethod
    def from_json(line: str) -> "Alert":
        d = json.loads(line)
        return Alert(int(d["t"]), d["sensor"], d["dir"], d["indicator"],
                     float(d["value"]), float(d["limit"]), d["policy"])


def nearest_rank(values: np.ndarray, percentile: float) -> float:
    """k-th smallest with k = ceil(p * n): deterministic, no interpolation."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n == 0:
        raise InsufficientDataError("empty training set")
    k = min(max(int(math.ceil(percentile * n)), 1), n)
    return float(np.partition(v, k - 1)[k - 1])


def calibrate_thresholds(
    training: Mapping[ScopeKey, np.ndarray],
    policy: ThresholdPolicy,
) -> dict[ScopeKey, float]:
    """Per-scope limits from a training stream.

    When the training set is smaller than the 1/(1-p) records the percentile
    nominally needs, the limit degrades to the observed maximum and a
    warning is logged.
    """
    limits: dict[ScopeKey, float] = {}
    for scope, values in training.items():
        if policy.scopes is not None and scope not in policy.scopes:
            continue
        if policy.fixed_value is not None:
            limits[scope] = float(policy.fixed_value)
            continue
        n = len(values)
        if n == 0:
            raise InsufficientDataError(f"no training records for scope {scope}")
        need = 1.0 / (1.0 - policy.percentile)
        if n < need:
            log.warning("scope %s has %d records, below the ~%.0f the %s percentile "
                        "needs; using max observed", scope, n, need, policy.name)
            limits[scope] = float(np.max(values))
        else:
            limits[scope] = nearest_rank(values, policy.percentile)
    return limits


def scope_values(batch: IndicatorBatch, indicator: str) -> dict[ScopeKey, np.ndarray]:
    """Columns of one batch keyed by (sensor, direction) for calibration."""
    if indicator == "euclid_eri":
        return {(batch.sensor_id, "e"): batch.eri("e")}
    return {(batch.sensor_id, d): batch.value(d, indicator) for d in ("x", "y", "z")}


def evaluate(
    batch: IndicatorBatch,
    limits: Mapping[ScopeKey, float],
    policy: ThresholdPolicy,
) -> list[Alert]:
    """Alerts for every (scope, second) strictly above its limit."""
    alerts: list[Alert] = []
    for (sensor, direction), limit in limits.items():
        if sensor != batch.sensor_id:
            continue
        if direction == "e":
            values = batch.eri("e")
            indicator = "euclid_eri"
        else:
            values = batch.value(direction, policy.indicator)
            indicator = policy.indicator
        hits = np.flatnonzero(values > limit)
        for i in hits:
            alerts.append(Alert(int(batch.ts[i]), sensor, direction, indicator,
                                float(values[i]), float(limit), policy.name))
    return alerts


# ---------------------------------------------------------------------------
# Manhattan vector

def manhattan(values_by_scope: Mapping[ScopeKey, float],
              required: Sequence[ScopeKey]) -> float | None:
    """Arithmetic sum across the configured scopes; None if any is missing."""
    total = 0.0
    for scope in required:
        if scope not in values_by_scope:
            log.info("manhattan: scope %s missing, second skipped", scope)
            return None
        total += float(values_by_scope[scope])
    return total


def manhattan_series(
    batches: Mapping[str, IndicatorBatch],
    scopes: Sequence[ScopeKey],
    indicator: str = "eri",
) -> tuple[np.ndarray, np.ndarray]:
    """(ts, sums) for the seconds where every configured scope has a record."""
    per_scope: dict[ScopeKey, tuple[np.ndarray, np.ndarray]] = {}
    for sensor, direction in scopes:
        b = batches.get(sensor)
        if b is None or len(b) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        per_scope[(sensor, direction)] = (np.asarray(b.ts),
                                          b.eri("e") if direction == "e"
                                          else b.value(direction, indicator))
    common = None
    for ts, _ in per_scope.values():
        common = ts if common is None else np.intersect1d(common, ts, assume_unique=False)
    if common is None or len(common) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    total = np.zeros(len(common))
    for ts, vals in per_scope.values():
        idx = np.searchsorted(ts, common)
        total += vals[idx]
    return common.astype(np.int64), total


def evaluate_series(ts: np.ndarray, values: np.ndarray, limit: float,
                    policy_name: str, scope: ScopeKey = MANHATTAN_SCOPE) -> list[Alert]:
    hits = np.flatnonzero(np.asarray(values) > limit)
    return [Alert(int(ts[i]), scope[0], scope[1], scope[1], float(values[i]),
                  float(limit), policy_name) for i in hits]


# ---------------------------------------------------------------------------
# Mean time between alerts

@dataclass(frozen=True)
class EscalationFlag:
    time: int
    mtba_s: float
    baseline_mtba_s: float
    ratio: float
    alerts_in_window: int

    def to_json(self) -> str:
        return json.dumps({"t": self.time, "mtba_s": self.mtba_s,
                           "baseline_mtba_s": self.baseline_mtba_s,
                           "ratio": self.ratio, "alerts": self.alerts_in_window})


def debounce_alerts(times: Sequence[float], holdoff_s: float = 30.0) -> list[float]:
    """Collapse bursts of per-second alerts into single notifications.

    One crossing above threshold raises several consecutive alert seconds;
    the notification stream that MTBA tracks keeps only the first of each
    burst (alerts within holdoff_s of the previous notification merge).
    """
    out: list[float] = []
    for t in times:
        if not out or t - out[-1] > holdoff_s:
            out.append(float(t))
    return out


@dataclass
class MtbaTracker:
    """Sliding-window mean time between alerts with escalation flagging.

    mtba_estimate = window / n_alerts_in_window once at least two alerts sit
    in the window (None otherwise).  A flag is raised while
    baseline / estimate >= ratio with at least min_alerts alerts in window;
    re-arms only after the condition clears.
    """

    window_s: float = 86400.0
    baseline_mtba_s: float = 86400.0
    ratio: float = 10.0
    min_alerts: int = 5
    _times: deque = field(default_factory=deque)
    _last_time: float | None = None
    _active: bool = False

    @property
    def mtba_estimate(self) -> float | None:
        if len(self._times) < 2:
            return None
        return self.window_s / len(self._times)

    def update(self, alert_time: float) -> EscalationFlag | None:
        if self._last_time is not None and alert_time < self._last_time:
            raise OrderingError(
                f"alert at {alert_time} precedes {self._last_time}")
        self._last_time = alert_time
        self._times.append(alert_time)
        cutoff = alert_time - self.window_s
        while self._times and self._times[0] <= cutoff:
            self._times.popleft()

        est = self.mtba_estimate
        escalated = (est is not None and len(self._times) >= self.min_alerts
                     and self.baseline_mtba_s / est >= self.ratio)
        if escalated and not self._active:
            self._active = True
            return EscalationFlag(int(alert_time), est, self.baseline_mtba_s,
                                  self.baseline_mtba_s / est, len(self._times))
        if not escalated:
            self._active = False
        return None


# ---------------------------------------------------------------------------
# Count reports

@dataclass
class AlertReport:
    scopes: list[str]                 # row labels "sensor/dir"
    buckets: list[str]                # column labels
    counts: np.ndarray                # (scopes, buckets) int
    totals: np.ndarray                # per-bucket totals

    def to_csv(self) -> str:
        lines = ["scope," + ",".join(self.buckets)]
        for label, row in zip(self.scopes, self.counts):
            lines.append(label + "," + ",".join(str(int(c)) for c in row))
        lines.append("total," + ",".join(str(int(c)) for c in self.totals))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max([len(s) for s in self.scopes + ["total"]] or [5]) + 2
        cols = [max(len(b), 6) for b in self.buckets]
        out = ["scope".ljust(width) + "".join(b.rjust(w + 2) for b, w in zip(self.buckets, cols))]
        for label, row in zip(self.scopes, self.counts):
            out.append(label.ljust(width)
                       + "".join(str(int(c)).rjust(w + 2) for c, w in zip(row, cols)))
        out.append("total".ljust(width)
                   + "".join(str(int(c)).rjust(w + 2) for c, w in zip(self.totals, cols)))
        return "\n".join(out) + "\n"


def _bucket_edges(alerts: Sequence[Alert], bucket: str) -> list[tuple[str, int, int]]:
    import datetime as dt

    if not alerts:
        return []
    t0 = min(a.time for a in alerts)
    t1 = max(a.time for a in alerts)
    edges: list[tuple[str, int, int]] = []
    if bucket == "day":
        d = t0 // 86400
        while d * 86400 <= t1:
            day = dt.datetime.fromtimestamp(d * 86400, dt.timezone.utc)
            edges.append((day.strftime("%Y-%m-%d"), d * 86400, (d + 1) * 86400))
            d += 1
    elif bucket == "week":
        w = t0 // (7 * 86400)
        while w * 7 * 86400 <= t1:
            edges.append((f"w{w}", w * 7 * 86400, (w + 1) * 7 * 86400))
            w += 1
    elif bucket == "month":
        first = dt.datetime.fromtimestamp(t0, dt.timezone.utc).replace(
            day=1, hour=0, minute=0, second=0, microsecond=0)
        cur = first
        while cur.timestamp() <= t1:
            nxt = (cur.replace(year=cur.year + 1, month=1) if cur.month == 12
                   else cur.replace(month=cur.month + 1))
            edges.append((cur.strftime("%Y-%m"), int(cur.timestamp()), int(nxt.timestamp())))
            cur = nxt
    else:
        raise ConfigError(f"unknown bucket {bucket!r}")
    return edges


def alert_report(alerts: Sequence[Alert],
                 buckets: str | Sequence[tuple[str, int, int]] = "month") -> AlertReport:
    """Counts per (scope, calendar bucket) plus a totals row.

    buckets may be "day"/"week"/"month" or explicit (label, start_s, end_s)
    edges for irregular periods.
    """
    edges = _bucket_edges(alerts, buckets) if isinstance(buckets, str) else list(buckets)
    scope_labels = sorted({f"{a.sensor_id}/{a.direction}" for a in alerts})
    idx = {s: i for i, s in enumerate(scope_labels)}
    counts = np.zeros((len(scope_labels), len(edges)), dtype=np.int64)
    for a in alerts:
        for j, (_, b0, b1) in enumerate(edges):
            if b0 <= a.time < b1:
                counts[idx[f"{a.sensor_id}/{a.direction}"], j] += 1
                break
    return AlertReport(scope_labels, [e[0] for e in edges], counts, counts.sum(axis=0))


# ---------------------------------------------------------------------------
# Threshold artifact I/O

def dump_limits(limits_by_policy: Mapping[str, Mapping[ScopeKey, float]], path) -> None:
    payload = {
        "version": 1,
        "policies": {
            name: [{"sensor": s, "dir": d, "limit": v} for (s, d), v in sorted(lm.items())]
            for name, lm in limits_by_policy.items()
        },
    }
    from pathlib import Path
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_limits(path) -> dict[str, dict[ScopeKey, float]]:
    from pathlib import Path
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != 1:
        raise ConfigError(f"unsupported thresholds artifact version {payload.get('version')}")
    return {name: {(r["sensor"], r["dir"]): float(r["limit"]) for r in rows}
            for name, rows in payload["policies"].items()}

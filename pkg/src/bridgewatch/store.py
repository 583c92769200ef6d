"""Append-only date-partitioned store with event snapshots and retention.

Layout under the store root:

    indicators/YYYY-MM-DD/<sensor>.csv      one-second records, 4 rows each
    raw/YYYY-MM-DD/<sensor>.ndjson          full-rate global series, 1 line/second
    inclination/YYYY-MM-DD/<sensor>.csv     five-minute pitch/roll
    alerts/alerts.ndjson                    alert log
    alerts/escalations.ndjson               escalation flags
    events/<event_id>/manifest.json         snapshot manifest (written last)
    events/<event_id>/raw.ndjson            archived full-rate chunk
    events/<event_id>/indicators.csv        linked one-second records
    artifacts/                              thresholds / model files

Indicator and raw partitions are plain append files: a row is committed
once its newline is on disk, and readers drop an unterminated tail, so a
single writer and any number of readers coexist.  Multi-file artifacts
(snapshots, models) are written to a temp name and renamed, manifest last.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import indicators as ind
from .alerting import Alert, EscalationFlag
from .errors import ConflictError, OrderingError
from .indicators import IndicatorBatch, InclinationRecord, slice_batch
from .signals import GlobalSeries


def _day_str(ts: int) -> str:
    return dt.datetime.fromtimestamp(ts, dt.timezone.utc).strftime("%Y-%m-%d")


def _read_committed_lines(path: Path) -> list[str]:
    """All newline-terminated lines; a torn tail (no newline) is ignored."""
    if not path.exists():
        return []
    data = path.read_bytes()
    if not data:
        return []
    if not data.endswith(b"\n"):
        data = data[:data.rfind(b"\n") + 1] if b"\n" in data else b""
    return data.decode().splitlines()


@dataclass
class RetentionRule:
    pre_s: int = 30
    post_s: int = 60
    raw_ttl_days: int = 7
    indicator_ttl_days: int | None = None     # unlimited by default
    align_s: int = 10          # snapshot edges snap outward to this grid
    coalesce_s: int | None = None             # defaults to post_s

    def __post_init__(self):
        if self.pre_s < 0 or self.post_s < 0:
            raise ValueError("pre_s/post_s must be >= 0")
        if self.coalesce_s is None:
            self.coalesce_s = self.post_s


@dataclass
class EventSnapshot:
    event_id: str
    trigger_time: int
    trigger: dict
    range_start: int          # epoch s, snapped outward to align_s
    range_end: int
    sensors: list[str]
    partial: bool = False

    def manifest(self) -> dict:
        return {"version": 1, "event_id": self.event_id,
                "trigger_time": self.trigger_time, "trigger": self.trigger,
                "range": [self.range_start, self.range_end],
                "sensors": self.sensors, "partial": self.partial}


def raw_row(g: GlobalSeries, mask_all=False) -> str:
    """One NDJSON line for a (usually one-second) global-series chunk."""
    body = {"sid": g.sensor_id, "tick": int(g.start_tick), "rate": g.rate,
            "x": [float(v) for v in g.x], "y": [float(v) for v in g.y],
            "z": [float(v) for v in g.z]}
    if g.gap_mask.any():
        body["mask"] = [int(b) for b in g.gap_mask]
    return json.dumps(body)


def parse_raw_row(line: str) -> GlobalSeries:
    d = json.loads(line)
    n = len(d["x"])
    mask = np.asarray(d.get("mask", [0] * n), dtype=bool)
    return GlobalSeries(d["sid"], int(d["rate"]), int(d["tick"]),
                        np.asarray(d["x"], dtype=float), np.asarray(d["y"], dtype=float),
                        np.asarray(d["z"], dtype=float), mask)


def concat_series(chunks: Sequence[GlobalSeries]) -> GlobalSeries | None:
    """Join contiguous chunks, zero-filling and masking tick gaps."""
    chunks = sorted(chunks, key=lambda c: c.start_tick)
    if not chunks:
        return None
    rate = chunks[0].rate
    start = chunks[0].start_tick
    end = chunks[-1].start_tick + len(chunks[-1])
    n = end - start
    x = np.zeros(n); y = np.zeros(n); z = np.zeros(n)
    mask = np.ones(n, dtype=bool)
    for c in chunks:
        i = c.start_tick - start
        x[i:i + len(c)] = c.x
        y[i:i + len(c)] = c.y
        z[i:i + len(c)] = c.z
        mask[i:i + len(c)] = c.gap_mask
    return GlobalSeries(chunks[0].sensor_id, rate, start, x, y, z, mask)


class Store:
    """Single-writer append-only store rooted at a directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("indicators", "raw", "inclination", "alerts", "events", "artifacts"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._dedup: dict[Path, dict[int, str]] = {}

    # -- indicators --------------------------------------------------------

    def _indicator_path(self, day: str, sensor: str) -> Path:
        return self.root / "indicators" / day / f"{sensor}.csv"

    def _partition_index(self, path: Path) -> dict[int, str]:
        idx = self._dedup.get(path)
        if idx is None:
            idx = {}
            for line in _read_committed_lines(path):
                ts = int(line.split(",", 1)[0])
                idx.setdefault(ts, "")
                idx[ts] += line + "\n"
            self._dedup[path] = idx
        return idx

    def append_indicators(self, batch: IndicatorBatch) -> int:
        """Durable append; identical duplicates are absorbed, conflicts raise.

        Records must arrive time-ordered per sensor within a call.  Returns
        the number of newly stored records.
        """
        if len(batch) == 0:
            return 0
        if np.any(np.diff(batch.ts) < 0):
            raise OrderingError(f"indicator batch for {batch.sensor_id} not time-ordered")
        rows = ind.batch_to_rows(batch)
        per_record = {}
        for row in rows:
            ts = int(row.split(",", 1)[0])
            per_record.setdefault(ts, "")
            per_record[ts] += row + "\n"

        stored = 0
        by_day: dict[str, list[tuple[int, str]]] = {}
        for ts, blob in per_record.items():
            by_day.setdefault(_day_str(ts), []).append((ts, blob))
        for day, items in sorted(by_day.items()):
            path = self._indicator_path(day, batch.sensor_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            idx = self._partition_index(path)
            out = []
            for ts, blob in sorted(items):
                existing = idx.get(ts)
                if existing is not None:
                    if existing != blob:
                        raise ConflictError(
                            f"{batch.sensor_id}@{ts}: conflicting duplicate indicator append")
                    continue
                idx[ts] = blob
                out.append(blob)
                stored += 1
            if out:
                with path.open("a") as fh:
                    fh.write("".join(out))
        return stored

    def indicator_sensors(self) -> list[str]:
        names = set()
        for daydir in (self.root / "indicators").iterdir():
            for f in daydir.glob("*.csv"):
                names.add(f.stem)
        return sorted(names)

    def query_indicators(self, sensor: str, t0: int, t1: int,
                         resolution_s: int = 1) -> IndicatorBatch:
        """Records with t0 <= window_start < t1, aggregated on the fly."""
        rows: list[str] = []
        day = (t0 // 86400) * 86400
        while day < t1:
            path = self._indicator_path(_day_str(day), sensor)
            for line in _read_committed_lines(path):
                ts = int(line.split(",", 1)[0])
                if t0 <= ts < t1:
                    rows.append(line)
            day += 86400
        batch = ind.rows_to_batch(rows, sensor)
        if resolution_s != 1:
            batch = ind.aggregate(batch, resolution_s)
        return batch

    # -- raw global series --------------------------------------------------

    def _raw_path(self, day: str, sensor: str) -> Path:
        return self.root / "raw" / day / f"{sensor}.ndjson"

    def append_raw(self, chunks: Iterable[GlobalSeries]) -> None:
        by_path: dict[Path, list[str]] = {}
        for g in chunks:
            sec = g.start_tick // g.rate
            path = self._raw_path(_day_str(sec), g.sensor_id)
            by_path.setdefault(path, []).append(raw_row(g))
        for path, lines in by_path.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a") as fh:
                fh.write("\n".join(lines) + "\n")

    def query_raw(self, sensor: str, t0: int, t1: int) -> GlobalSeries | None:
        """Full-rate chunk covering [t0, t1) seconds, raw store then events."""
        chunks: list[GlobalSeries] = []
        day = (t0 // 86400) * 86400
        while day < t1:
            path = self._raw_path(_day_str(day), sensor)
            for line in _read_committed_lines(path):
                g = parse_raw_row(line)
                if g.sensor_id == sensor and t0 * g.rate <= g.start_tick < t1 * g.rate:
                    chunks.append(g)
            day += 86400
        if not chunks:
            for ev in self.list_events():
                if ev.range_start <= t0 and t1 <= ev.range_end and sensor in ev.sensors:
                    for line in _read_committed_lines(self.event_dir(ev.event_id) / "raw.ndjson"):
                        g = parse_raw_row(line)
                        if g.sensor_id == sensor and t0 * g.rate <= g.start_tick < t1 * g.rate:
                            chunks.append(g)
                    break
        return concat_series(chunks)

    # -- inclination ---------------------------------------------------------

    def append_inclination(self, records: Sequence[InclinationRecord]) -> None:
        by_path: dict[Path, list[str]] = {}
        for r in records:
            path = self.root / "inclination" / _day_str(r.window_start) / f"{r.sensor_id}.csv"
            by_path.setdefault(path, []).append(
                f"{r.window_start},{r.sensor_id},{r.window_len},"
                f"{float(r.pitch_deg)!r},{float(r.roll_deg)!r}")
        for path, lines in by_path.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a") as fh:
                fh.write("\n".join(lines) + "\n")

    def query_inclination(self, sensor: str, t0: int, t1: int) -> list[InclinationRecord]:
        out = []
        day = (t0 // 86400) * 86400
        while day < t1:
            path = self.root / "inclination" / _day_str(day) / f"{sensor}.csv"
            for line in _read_committed_lines(path):
                ts, sid, wlen, pitch, roll = line.split(",")
                if t0 <= int(ts) < t1:
                    out.append(InclinationRecord(sid, int(ts), int(wlen),
                                                 float(pitch), float(roll)))
            day += 86400
        return out

    # -- alerts ---------------------------------------------------------------

    def append_alerts(self, alerts: Sequence[Alert]) -> None:
        if not alerts:
            return
        path = self.root / "alerts" / "alerts.ndjson"
        with path.open("a") as fh:
            fh.write("\n".join(a.to_json() for a in alerts) + "\n")

    def query_alerts(self, t0: int | None = None, t1: int | None = None) -> list[Alert]:
        path = self.root / "alerts" / "alerts.ndjson"
        out = []
        for line in _read_committed_lines(path):
            a = Alert.from_json(line)
            if (t0 is None or a.time >= t0) and (t1 is None or a.time < t1):
                out.append(a)
        return out

    def append_escalations(self, flags: Sequence[EscalationFlag]) -> None:
        if not flags:
            return
        path = self.root / "alerts" / "escalations.ndjson"
        with path.open("a") as fh:
            fh.write("\n".join(f.to_json() for f in flags) + "\n")

    def query_escalations(self) -> list[dict]:
        path = self.root / "alerts" / "escalations.ndjson"
        return [json.loads(line) for line in _read_committed_lines(path)]

    # -- event snapshots -------------------------------------------------------

    def event_dir(self, event_id: str) -> Path:
        return self.root / "events" / event_id

    def list_events(self) -> list[EventSnapshot]:
        out = []
        for d in sorted((self.root / "events").iterdir()):
            mf = d / "manifest.json"
            if not mf.exists():
                continue               # unfinished snapshot: invisible
            m = json.loads(mf.read_text())
            out.append(EventSnapshot(m["event_id"], m["trigger_time"], m["trigger"],
                                     m["range"][0], m["range"][1], m["sensors"],
                                     m.get("partial", False)))
        return out

    def capture_snapshot(self, trigger_time: int, trigger: dict, rule: RetentionRule,
                         raw_chunks: dict[str, Sequence[GlobalSeries]],
                         batches: Sequence[IndicatorBatch] = ()) -> EventSnapshot:
        """Persist a high-resolution chunk around a trigger.

        The range [t - pre_s, t + post_s] snaps outward to the rule's align
        grid so recomputing indicators from the archived raw reproduces the
        stored records byte-for-byte.  A trigger falling inside the
        coalescing horizon of the latest snapshot extends it instead of
        opening a new one.
        """
        a = rule.align_s
        start = ((trigger_time - rule.pre_s) // a) * a
        end = -(-(trigger_time + rule.post_s) // a) * a

        events = self.list_events()
        if events:
            last = max(events, key=lambda e: e.range_end)
            # a trigger landing inside (or within the coalescing horizon of)
            # the open snapshot extends it instead of starting a storm
            horizon = last.range_end + (rule.coalesce_s - rule.post_s)
            if last.range_start <= trigger_time <= horizon:
                return self._extend_snapshot(last, trigger_time, end, raw_chunks, batches)

        event_id = f"evt-{trigger_time}"
        seq = 0
        while self.event_dir(event_id).exists():
            seq += 1
            event_id = f"evt-{trigger_time}-{seq}"
        return self._write_snapshot(event_id, trigger_time, trigger, start, end,
                                    raw_chunks, batches)

    def _collect_rows(self, start: int, end: int,
                      raw_chunks: dict[str, Sequence[GlobalSeries]]) -> tuple[list[str], bool]:
        rows = []
        partial = False
        for sensor, chunks in sorted(raw_chunks.items()):
            got_ticks = 0
            rate = None
            for g in sorted(chunks, key=lambda c: c.start_tick):
                rate = g.rate
                if g.start_tick >= start * g.rate and g.start_tick < end * g.rate:
                    rows.append(raw_row(g))
                    got_ticks += len(g)
            if rate is not None and got_ticks < (end - start) * rate:
                partial = True
        return rows, partial

    def _write_snapshot(self, event_id, trigger_time, trigger, start, end,
                        raw_chunks, batches) -> EventSnapshot:
        rows, partial = self._collect_rows(start, end, raw_chunks)
        snap = EventSnapshot(event_id, trigger_time, trigger, start, end,
                             sorted(raw_chunks.keys()), partial)
        tmp = self.event_dir(event_id + ".tmp")
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        (tmp / "raw.ndjson").write_text("\n".join(rows) + "\n" if rows else "")
        ind_rows = []
        for b in batches:
            keep = (b.ts >= start) & (b.ts < end)
            if keep.any():
                sub = slice_batch(b, np.flatnonzero(keep))
                ind_rows.extend(ind.batch_to_rows(sub))
        (tmp / "indicators.csv").write_text("\n".join(ind_rows) + "\n" if ind_rows else "")
        (tmp / "manifest.json").write_text(json.dumps(snap.manifest(), indent=1))
        os.rename(tmp, self.event_dir(event_id))
        return snap

    def _extend_snapshot(self, snap: EventSnapshot, trigger_time: int, new_end: int,
                         raw_chunks, batches) -> EventSnapshot:
        if new_end <= snap.range_end:
            return snap
        d = self.event_dir(snap.event_id)
        rows, partial = self._collect_rows(snap.range_end, new_end, raw_chunks)
        with (d / "raw.ndjson").open("a") as fh:
            if rows:
                fh.write("\n".join(rows) + "\n")
        ind_rows = []
        for b in batches:
            keep = (b.ts >= snap.range_end) & (b.ts < new_end)
            if keep.any():
                ind_rows.extend(ind.batch_to_rows(slice_batch(b, np.flatnonzero(keep))))
        with (d / "indicators.csv").open("a") as fh:
            if ind_rows:
                fh.write("\n".join(ind_rows) + "\n")
        snap.range_end = new_end
        snap.partial = snap.partial or partial
        (d / "manifest.json").write_text(json.dumps(snap.manifest(), indent=1))
        return snap

    def event_raw(self, event_id: str) -> dict[str, GlobalSeries]:
        per_sensor: dict[str, list[GlobalSeries]] = {}
        for line in _read_committed_lines(self.event_dir(event_id) / "raw.ndjson"):
            g = parse_raw_row(line)
            per_sensor.setdefault(g.sensor_id, []).append(g)
        return {s: concat_series(cs) for s, cs in per_sensor.items()}

    def event_indicator_rows(self, event_id: str) -> list[str]:
        return _read_committed_lines(self.event_dir(event_id) / "indicators.csv")

    # -- retention ---------------------------------------------------------------

    def apply_retention(self, now_s: int, rule: RetentionRule) -> dict:
        """Drop raw partitions past their TTL; snapshots and indicators stay.

        Snapshot directories self-contain their raw chunks, so whole-day raw
        files can go.  Returns a deletion report and is idempotent.
        """
        report = {"deleted_files": 0, "deleted_bytes": 0}
        cutoff_day = (now_s - rule.raw_ttl_days * 86400) // 86400

        def sweep(subdir: str, ttl_days: int | None):
            if ttl_days is None:
                return
            limit = (now_s - ttl_days * 86400) // 86400
            base = self.root / subdir
            for daydir in sorted(base.iterdir()):
                try:
                    day = dt.datetime.strptime(daydir.name, "%Y-%m-%d")
                except ValueError:
                    continue
                epoch_day = int(day.replace(tzinfo=dt.timezone.utc).timestamp()) // 86400
                if epoch_day < limit:
                    for f in daydir.iterdir():
                        report["deleted_files"] += 1
                        report["deleted_bytes"] += f.stat().st_size
                        f.unlink()
                    daydir.rmdir()

        sweep("raw", rule.raw_ttl_days)
        sweep("indicators", rule.indicator_ttl_days)
        report["cutoff_day"] = int(cutoff_day)
        return report

    # -- artifacts -----------------------------------------------------------------

    def artifact_path(self, name: str) -> Path:
        return self.root / "artifacts" / name

    def write_artifact(self, name: str, text: str) -> Path:
        path = self.artifact_path(name)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text)
        os.rename(tmp, path)
        return path

    # -- integrity ------------------------------------------------------------------

    def tree_digest(self) -> str:
        """Stable digest of every committed byte, for replay-equality checks."""
        import hashlib
        h = hashlib.sha256()
        for path in sorted(self.root.rglob("*")):
            if path.is_file() and not path.name.endswith(".tmp"):
                h.update(str(path.relative_to(self.root)).encode())
                h.update(path.read_bytes())
        return h.hexdigest()

"""Command-line entry points.

Exit codes: 0 success, 1 usage/configuration error, 2 an escalation flag
is active, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import GRAVITY, alerting, anomaly
from . import indicators as ind
from .errors import BridgewatchError, ConfigError
from .pipeline import Pipeline, PipelineConfig, feature_matrix, file_source, tcp_source
from .service import ApiConfig, create_app, serve
from .signals import dump_sensors
from .store import Store

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ESCALATION = 2
EXIT_DATA = 3


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except BridgewatchError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"missing input: {e}", file=sys.stderr)
        return EXIT_USAGE


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridgewatch",
                                description="bridge monitoring engine")
    sub = p.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", help="render a scenario to frames or records")
    sim.add_argument("scenario", help="scenario JSON file")
    sim.add_argument("-o", "--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--mode", choices=("waveform", "records"), default="waveform")
    sim.set_defaults(func=cmd_simulate)

    run = sub.add_parser("run", help="replay or live-ingest a frame stream")
    run.add_argument("--config", required=True)
    run.add_argument("--input", required=True,
                     help="NDJSON file path or tcp:HOST:PORT")
    run.add_argument("--resume", action="store_true")
    run.set_defaults(func=cmd_run)

    tr = sub.add_parser("train", help="calibrate thresholds and fit anomaly model")
    tr.add_argument("--config", required=True)
    tr.add_argument("--from", dest="t0", type=int, required=True, help="epoch seconds")
    tr.add_argument("--to", dest="t1", type=int, required=True)
    tr.add_argument("--psi", type=int, default=256)
    tr.add_argument("--trees", type=int, default=100)
    tr.add_argument("--seed", type=int, default=0)
    tr.set_defaults(func=cmd_train)

    al = sub.add_parser("alerts", help="alert log reports")
    alsub = al.add_subparsers(dest="alerts_command")
    rep = alsub.add_parser("report", help="counts per scope and calendar bucket")
    rep.add_argument("--store", required=True)
    rep.add_argument("--bucket", default="month", choices=("day", "week", "month"))
    rep.add_argument("--from", dest="t0", type=int, default=None)
    rep.add_argument("--to", dest="t1", type=int, default=None)
    rep.add_argument("-o", "--out", default=None, help="CSV output path")
    rep.set_defaults(func=cmd_alerts_report)

    sc = sub.add_parser("score", help="score stored indicators, write health index")
    sc.add_argument("--model", required=True)
    sc.add_argument("--store", required=True)
    sc.add_argument("--from", dest="t0", type=int, required=True)
    sc.add_argument("--to", dest="t1", type=int, required=True)
    sc.add_argument("-o", "--out", default=None,
                    help="health CSV path (default store artifact)")
    sc.set_defaults(func=cmd_score)

    ins = sub.add_parser("inspect", help="emit plot data as CSV")
    ins.add_argument("view", choices=("fft", "scatter", "maxima"))
    ins.add_argument("--store", required=True)
    ins.add_argument("--sensor")
    ins.add_argument("--dir", default="e")
    ins.add_argument("--from", dest="t0", type=int, required=True)
    ins.add_argument("--to", dest="t1", type=int, required=True)
    ins.add_argument("--method", default="fft", choices=("fft", "welch"))
    ins.add_argument("--res", default="1h", choices=("1s", "1m", "1h"))
    ins.add_argument("-o", "--out", required=True)
    ins.set_defaults(func=cmd_inspect)

    sv = sub.add_parser("serve", help="start the read-only inspection API")
    sv.add_argument("--config", required=True)
    sv.add_argument("--host", default=None)
    sv.add_argument("--port", type=int, default=None)
    sv.add_argument("--ui-dir", default=None)
    sv.set_defaults(func=cmd_serve)

    vf = sub.add_parser("verify", help="run invariant self-checks")
    vf.add_argument("--store", default=None)
    vf.set_defaults(func=cmd_verify)
    return p


def cmd_simulate(args) -> int:
    from .simulator import (Scenario, default_bridge, simulate_period,
                            simulate_period_records, truth_events, draw_traffic,
                            write_frames_ndjson)
    scenario = Scenario.load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bridge = default_bridge(seed=args.seed,
                            misorientation_deg=scenario.misorientation_deg,
                            bias_mps2=scenario.bias_mps2,
                            sensors=list(scenario.sensors) if scenario.sensors else None)
    dump_sensors(bridge.sensors.values(), out / "sensors.json")
    traffic = draw_traffic(scenario, args.seed)
    with (out / "truth.ndjson").open("w") as fh:
        for e in truth_events(scenario, traffic):
            fh.write(json.dumps(e) + "\n")

    if args.mode == "waveform":
        n = write_frames_ndjson(simulate_period(bridge, scenario, args.seed),
                                out / "frames.ndjson")
        print(f"wrote {n} frames to {out / 'frames.ndjson'}")
    else:
        store = Store(out / "store")
        records = 0
        for day in simulate_period_records(bridge, scenario, args.seed):
            for sid, batch in day.batches.items():
                records += store.append_indicators(batch)
            for sid, recs in day.inclination.items():
                store.append_inclination(recs)
        print(f"wrote {records} indicator records to {store.root}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = PipelineConfig.load(args.config)
    pipe = Pipeline(config)
    if args.input.startswith("tcp:"):
        _, host, port = args.input.split(":")
        source = tcp_source(host, int(port))
    else:
        source = file_source(args.input)
    result = pipe.run(source, resume=args.resume)
    print(f"frames={result.frames} records={result.records} alerts={result.alerts} "
          f"snapshots={result.snapshots} anomalies={result.anomalies} "
          f"late_dropped={result.dropped_late} escalations={len(result.escalations)}")
    if result.chunk_latency_s:
        print(f"chunk latency mean={np.mean(result.chunk_latency_s):.4f}s "
              f"max={np.max(result.chunk_latency_s):.4f}s")
    return EXIT_ESCALATION if result.escalation_active else EXIT_OK


def cmd_train(args) -> int:
    config = PipelineConfig.load(args.config)
    pipe = Pipeline(config)
    artifacts = pipe.backfill_train(args.t0, args.t1, psi=args.psi,
                                    n_trees=args.trees, seed=args.seed)
    for name, path in artifacts.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_alerts_report(args) -> int:
    store = Store(args.store)
    alerts = store.query_alerts(args.t0, args.t1)
    report = alerting.alert_report(alerts, args.bucket)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_csv())
        print(f"csv written to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    model = anomaly.IsolationForestModel.load(args.model)
    store = Store(args.store)
    sensors: list[str] = []       # keep the model's training column order
    for name in model.feature_names:
        sid = name.split(".")[0]
        if sid not in sensors:
            sensors.append(sid)
    batches = {s: store.query_indicators(s, args.t0, args.t1) for s in sensors}
    ts, feats = feature_matrix(batches, sensors)
    if len(ts) == 0:
        print("no complete feature rows in range", file=sys.stderr)
        return EXIT_DATA
    flags = anomaly.score_stream(model, ts, feats)
    day0, day1 = args.t0 // 86400, -(-args.t1 // 86400)
    mean = model.training_daily_mean
    if not mean:
        mean = anomaly.training_daily_mean(flags, day0, day1)
        print("model carries no training mean; normalising to this range")
    points = anomaly.asset_health(flags, mean, day0, day1)
    rows = ["date,percent"] + anomaly.health_rows(points)
    if args.out:
        Path(args.out).write_text("\n".join(rows) + "\n")
        target = args.out
    else:
        store.write_artifact("health.csv", "\n".join(rows) + "\n")
        target = store.artifact_path("health.csv")
    print(f"{len(flags)} flagged seconds, health index for {len(points)} days -> {target}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from . import spectral
    store = Store(args.store)
    rows: list[str]
    if args.view == "fft":
        if not args.sensor:
            raise ConfigError("inspect fft needs --sensor")
        g = store.query_raw(args.sensor, args.t0, args.t1)
        if g is None:
            raise BridgewatchError(f"no raw data for {args.sensor} in range")
        seg = {"x": g.x, "y": g.y, "z": g.z}[args.dir if args.dir != "e" else "z"]
        seg = seg - seg.mean()
        s = (spectral.fft_magnitude(seg, g.rate) if args.method == "fft"
             else spectral.welch_psd(seg, g.rate))
        rows = ["freq_hz,power"] + spectral.spectrum_rows(s)
    elif args.view == "scatter":
        if not args.sensor:
            raise ConfigError("inspect scatter needs --sensor")
        batch = store.query_indicators(args.sensor, args.t0, args.t1)
        d = args.dir if args.dir != "e" else "y"
        eri = batch.eri(d)
        eci = batch.eci(d)
        rows = ["ts,eri,eci"] + [f"{int(batch.ts[i])},{float(eri[i])!r},{float(eci[i])!r}"
                                 for i in range(len(batch))]
    else:
        step = {"1s": 1, "1m": 60, "1h": 3600}[args.res]
        names = [args.sensor] if args.sensor else store.indicator_sensors()
        rows = ["ts,sensor,dir,max_eri"]
        for sid in names:
            batch = store.query_indicators(sid, args.t0, args.t1, resolution_s=step)
            mx = batch.max_eri[args.dir]
            rows.extend(f"{int(batch.ts[i])},{sid},{args.dir},{float(mx[i])!r}"
                        for i in range(len(batch)))
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"{len(rows) - 1} rows -> {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:    # pragma: no cover - interactive
    raw = json.loads(Path(args.config).read_text())
    config = ApiConfig.from_dict(raw, base_dir=Path(args.config).parent)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    if args.ui_dir:
        config.ui_dir = args.ui_dir
    serve(config)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Fast self-checks of the numeric invariants; exit 3 on any failure."""
    import math
    import tempfile
    from .indicators import aggregate, batch_to_rows, eci, eri, window_indicators
    from .kinematics import added_mass_frequency, double_integrate
    from .signals import GlobalSeries

    checks: list[tuple[str, bool]] = []

    def check(name: str, ok: bool):
        checks.append((name, bool(ok)))
        print(f"{'PASS' if ok else 'FAIL'} {name}")

    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    v = rng.normal(size=(64, 3))
    check("rotation preserves norms",
          np.max(np.abs(np.linalg.norm(v @ q.T, axis=1) - np.linalg.norm(v, axis=1))) < 1e-9)

    check("eci anchors", eci(np.full(64, 1.0)) == 0.0
          and eci(np.tile([0.5, -0.5], 32)) == 2.0)
    t = np.arange(4096) / 1024.0
    check("eri of a dense tone is 2A/pi",
          abs(eri(0.7 * np.sin(2 * np.pi * t)) - 0.7 * 2 / math.pi) < 0.7 * 0.01)
    check("added-mass frequency shift",
          abs(added_mass_frequency(1.4, 150, 100) - 1.0844) < 1e-4)

    vals = rng.normal(0, 0.1, size=(7200 * 64, 3))
    g = GlobalSeries("V", 64, 0, vals[:, 0], vals[:, 1], vals[:, 2],
                     np.zeros(len(vals), bool))
    b = window_indicators(g)
    check("aggregation is associative",
          batch_to_rows(aggregate(b, 3600)) == batch_to_rows(aggregate(aggregate(b, 60), 3600)))

    d = double_integrate(-(2 * np.pi * 2) ** 2 * 0.01 * np.sin(2 * np.pi * 2 * np.arange(1280) / 64),
                         64.0)
    amp = math.sqrt(2) * np.std(d.values[320:-320])
    check("double integration recovers amplitude", abs(amp / 10.0 - 1.0) < 0.05)

    check("path-length normaliser", abs(anomaly.avg_path_length(256) - 10.244) < 2e-3
          and anomaly.avg_path_length(2) == 1.0)

    if args.store:
        store = Store(args.store)
        d1 = store.tree_digest()
        d2 = store.tree_digest()
        check("store digest is stable", d1 == d2)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            store = Store(tmp)
            store.append_indicators(b)
            back = store.query_indicators("V", 0, 7200)
            check("store roundtrip", batch_to_rows(back) == batch_to_rows(b))

    failed = [name for name, ok in checks if not ok]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_DATA
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


if __name__ == "__main__":      # pragma: no cover
    sys.exit(main())

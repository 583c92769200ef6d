"""Read-only HTTP API over a store: the machine interface of the drill-down.

Every endpoint is a GET returning JSON; a well-formed query over a valid
store never mutates anything and never 500s.  A range holding no data is
an empty array with status 200, not an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .. import indicators as ind
from .. import kinematics, spectral
from ..alerting import MtbaTracker
from ..errors import BridgewatchError, InsufficientDataError, SpectrumError
from ..signals import load_sensors
from ..store import Store
from . import models

RESOLUTIONS = {"1s": 1, "1m": 60, "1h": 3600}


@dataclass
class ApiConfig:
    store_path: str
    sensors_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8700
    cors_origins: tuple[str, ...] = ()
    read_only: bool = True          # structural: the app mounts no write routes
    ui_dir: str | None = None

    @staticmethod
    def from_dict(d: dict, base_dir: Path | None = None) -> "ApiConfig":
        def _path(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() or base_dir is None else base_dir / p)
        api = d.get("api", {})
        return ApiConfig(
            store_path=_path(d["store"]),
            sensors_path=_path(d.get("sensors")),
            host=api.get("host", "127.0.0.1"),
            port=int(api.get("port", 8700)),
            cors_origins=tuple(api.get("cors_origins", ())),
            ui_dir=_path(api.get("ui_dir")),
        )


def _ms(t_s: int | float) -> int:
    return int(round(t_s * 1000))


def _range_s(from_ms: int, to_ms: int) -> tuple[int, int]:
    if to_ms < from_ms:
        raise HTTPException(status_code=400, detail="'to' precedes 'from'")
    return from_ms // 1000, -(-to_ms // 1000)


def create_app(config: ApiConfig) -> FastAPI:
    store = Store(config.store_path)
    sensors = load_sensors(config.sensors_path) if config.sensors_path else {}

    app = FastAPI(title="bridge virtual inspection", version="0.1.0")
    if config.cors_origins:
        app.add_middleware(CORSMiddleware, allow_origins=list(config.cors_origins),
                           allow_methods=["GET"], allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def _validation_as_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def known_sensor(sensor: str) -> None:
        known = set(sensors) | set(store.indicator_sensors())
        if sensor not in known:
            raise HTTPException(status_code=404, detail=f"unknown sensor {sensor!r}")

    def resolution(res: str) -> int:
        if res not in RESOLUTIONS:
            raise HTTPException(status_code=400,
                                detail=f"res must be one of {sorted(RESOLUTIONS)}")
        return RESOLUTIONS[res]

    def check_dir(d: str) -> str:
        if d not in ("x", "y", "z", "e"):
            raise HTTPException(status_code=400, detail="dir must be x, y, z or e")
        return d

    @app.get("/sensors", response_model=list[models.SensorInfo])
    def get_sensors():
        out = []
        for sid, m in sorted(sensors.items()):
            out.append(models.SensorInfo(
                sensor_id=sid, kind=m.kind, sample_rate=m.sample_rate,
                section=m.location.section, side=m.location.side,
                elevation_index=m.location.elevation_index))
        for sid in store.indicator_sensors():
            if sid not in sensors:
                out.append(models.SensorInfo(sensor_id=sid, kind="accelerometer",
                                             sample_rate=64, section=0.0, side="mid",
                                             elevation_index=1))
        return out

    @app.get("/indicators", response_model=list[models.IndicatorPoint])
    def get_indicators(sensor: str, dir: str = "e",
                       from_: int = Query(alias="from"), to: int = Query(),
                       res: str = "1s"):
        known_sensor(sensor)
        d = check_dir(dir)
        step = resolution(res)
        t0, t1 = _range_s(from_, to)
        batch = store.query_indicators(sensor, t0, t1, resolution_s=step)
        eri = batch.eri(d)
        eci = batch.eci(d)
        mx = batch.max_eri[d]
        return [models.IndicatorPoint(t=_ms(int(batch.ts[i])), eri=float(eri[i]),
                                      eci=float(eci[i]), max_eri=float(mx[i]),
                                      count=int(batch.count[i]))
                for i in range(len(batch))]

    @app.get("/maxima", response_model=list[models.MaximaPoint])
    def get_maxima(from_: int = Query(alias="from"), to: int = Query(),
                   res: str = "1h", dir: str = "e", sensors_csv: str | None = Query(
                       default=None, alias="sensors")):
        d = check_dir(dir)
        step = resolution(res)
        t0, t1 = _range_s(from_, to)
        names = (sensors_csv.split(",") if sensors_csv else store.indicator_sensors())
        out: list[models.MaximaPoint] = []
        for sid in names:
            known_sensor(sid)
            batch = store.query_indicators(sid, t0, t1, resolution_s=step)
            mx = batch.max_eri[d]
            out.extend(models.MaximaPoint(t=_ms(int(batch.ts[i])), sensor=sid, dir=d,
                                          max_eri=float(mx[i]))
                       for i in range(len(batch)))
        out.sort(key=lambda p: (p.t, p.sensor))
        return out

    @app.get("/scatter", response_model=list[models.ScatterPoint])
    def get_scatter(sensor: str, dir: str = "y",
                    from_: int = Query(alias="from"), to: int = Query()):
        known_sensor(sensor)
        d = check_dir(dir)
        if d == "e":
            raise HTTPException(status_code=400, detail="scatter needs x, y or z")
        t0, t1 = _range_s(from_, to)
        batch = store.query_indicators(sensor, t0, t1)
        eri = batch.eri(d)
        eci = batch.eci(d)
        return [models.ScatterPoint(t=_ms(int(batch.ts[i])), eri=float(eri[i]),
                                    eci=float(eci[i])) for i in range(len(batch))]

    def _raw_or_404(sensor: str, from_ms: int, to_ms: int):
        known_sensor(sensor)
        t0, t1 = _range_s(from_ms, to_ms)
        return store.query_raw(sensor, t0, t1)

    @app.get("/timeseries", response_model=models.TimeseriesResponse)
    def get_timeseries(sensor: str, from_: int = Query(alias="from"), to: int = Query()):
        g = _raw_or_404(sensor, from_, to)
        if g is None:
            return models.TimeseriesResponse(sensor=sensor, rate=0, t0=from_,
                                             x=[], y=[], z=[], mask=[])
        return models.TimeseriesResponse(
            sensor=sensor, rate=g.rate, t0=int(round(g.start_time_ms)),
            x=[float(v) for v in g.x], y=[float(v) for v in g.y],
            z=[float(v) for v in g.z], mask=[int(b) for b in g.gap_mask])

    @app.get("/fft", response_model=models.SpectrumResponse)
    def get_fft(sensor: str, dir: str = "z", from_: int = Query(alias="from"),
                to: int = Query(), method: str = "fft"):
        if method not in ("fft", "welch"):
            raise HTTPException(status_code=400, detail="method must be fft or welch")
        d = check_dir(dir)
        if d == "e":
            raise HTTPException(status_code=400, detail="fft needs x, y or z")
        g = _raw_or_404(sensor, from_, to)
        if g is None:
            return models.SpectrumResponse(sensor=sensor, dir=d, method=method,
                                           freqs=[], power=[])
        seg = {"x": g.x, "y": g.y, "z": g.z}[d]
        seg = seg - seg.mean()          # gravity off the display spectrum
        try:
            if method == "fft":
                s = spectral.fft_magnitude(seg, g.rate)
            else:
                s = spectral.welch_psd(seg, g.rate)
        except SpectrumError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return models.SpectrumResponse(sensor=sensor, dir=d, method=method,
                                       freqs=[float(f) for f in s.freqs],
                                       power=[float(p) for p in s.power])

    @app.get("/displacement", response_model=models.DisplacementResponse)
    def get_displacement(sensor: str, dir: str = "z", from_: int = Query(alias="from"),
                         to: int = Query(), cutoff: float = 0.5):
        d = check_dir(dir)
        if d == "e":
            raise HTTPException(status_code=400, detail="displacement needs x, y or z")
        if cutoff <= 0:
            raise HTTPException(status_code=400, detail="cutoff must be positive")
        g = _raw_or_404(sensor, from_, to)
        if g is None:
            return models.DisplacementResponse(sensor=sensor, dir=d, rate=0.0,
                                               t0=from_, mm=[], cutoff_hz=cutoff)
        seg = {"x": g.x, "y": g.y, "z": g.z}[d]
        try:
            disp = kinematics.double_integrate(seg, g.rate, cutoff)
        except InsufficientDataError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return models.DisplacementResponse(
            sensor=sensor, dir=d, rate=g.rate, t0=int(round(g.start_time_ms)),
            mm=[float(v) for v in disp.values], cutoff_hz=cutoff)

    @app.get("/alerts", response_model=list[models.AlertOut])
    def get_alerts(from_: int | None = Query(default=None, alias="from"),
                   to: int | None = None):
        t0 = None if from_ is None else from_ // 1000
        t1 = None if to is None else -(-to // 1000)
        return [models.AlertOut(t=_ms(a.time), sensor=a.sensor_id, dir=a.direction,
                                indicator=a.indicator, value=a.value, limit=a.limit,
                                policy=a.policy)
                for a in store.query_alerts(t0, t1)]

    @app.get("/events", response_model=list[models.EventOut])
    def get_events():
        return [models.EventOut(event_id=e.event_id, trigger_time=_ms(e.trigger_time),
                                trigger=e.trigger, range_start=_ms(e.range_start),
                                range_end=_ms(e.range_end), sensors=e.sensors,
                                partial=e.partial)
                for e in store.list_events()]

    @app.get("/health-index", response_model=list[models.HealthPoint])
    def get_health(from_: int | None = Query(default=None, alias="from"),
                   to: int | None = None):
        path = store.artifact_path("health.csv")
        if not path.exists():
            return []
        out = []
        for line in path.read_text().splitlines():
            if not line or line.startswith("date"):
                continue
            date, pct = line.split(",")
            out.append(models.HealthPoint(date=date, percent=float(pct)))
        if from_ is not None or to is not None:
            import datetime as dt

            def day_ms(datestr):
                return dt.datetime.strptime(datestr, "%Y-%m-%d").replace(
                    tzinfo=dt.timezone.utc).timestamp() * 1000

            out = [p for p in out
                   if (from_ is None or day_ms(p.date) >= from_)
                   and (to is None or day_ms(p.date) < to)]
        return out

    @app.get("/inclination", response_model=list[models.InclinationPoint])
    def get_inclination(sensor: str, from_: int = Query(alias="from"), to: int = Query()):
        known_sensor(sensor)
        t0, t1 = _range_s(from_, to)
        return [models.InclinationPoint(t=_ms(r.window_start), pitch_deg=r.pitch_deg,
                                        roll_deg=r.roll_deg)
                for r in store.query_inclination(sensor, t0, t1)]

    @app.get("/mtba", response_model=models.MtbaResponse)
    def get_mtba(window: float = 86400.0, baseline: float = 86400.0):
        if window <= 0:
            raise HTTPException(status_code=400, detail="window must be positive")
        tracker = MtbaTracker(window_s=window, baseline_mtba_s=baseline)
        series = []
        for a in store.query_alerts():
            try:
                tracker.update(float(a.time))
            except BridgewatchError:
                continue
            est = tracker.mtba_estimate
            if est is not None:
                series.append(models.MtbaPoint(t=_ms(a.time), mtba_s=est))
        return models.MtbaResponse(baseline_s=baseline, window_s=window,
                                   series=series, escalations=store.query_escalations())

    if config.ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app


def serve(config: ApiConfig) -> None:   # pragma: no cover - thin uvicorn wrapper
    import uvicorn
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")

"""Pydantic response models for the virtual-inspection API.

All timestamps are epoch milliseconds UTC; resolutions are named 1s, 1m
and 1h.
"""

from __future__ import annotations

from pydantic import BaseModel


class SensorInfo(BaseModel):
    sensor_id: str
    kind: str
    sample_rate: int
    section: float
    side: str
    elevation_index: int


class IndicatorPoint(BaseModel):
    t: int                 # window start, epoch ms
    eri: float
    eci: float
    max_eri: float
    count: int


class MaximaPoint(BaseModel):
    t: int
    sensor: str
    dir: str
    max_eri: float


class ScatterPoint(BaseModel):
    t: int
    eri: float
    eci: float


class TimeseriesResponse(BaseModel):
    sensor: str
    rate: int
    t0: int                # epoch ms of first sample
    x: list[float]
    y: list[float]
    z: list[float]
    mask: list[int]


class SpectrumResponse(BaseModel):
    sensor: str
    dir: str
    method: str
    freqs: list[float]
    power: list[float]


class DisplacementResponse(BaseModel):
    sensor: str
    dir: str
    rate: float
    t0: int
    mm: list[float]
    cutoff_hz: float


class AlertOut(BaseModel):
    t: int                 # epoch ms
    sensor: str
    dir: str
    indicator: str
    value: float
    limit: float
    policy: str


class EventOut(BaseModel):
    event_id: str
    trigger_time: int      # epoch ms
    trigger: dict
    range_start: int       # epoch ms
    range_end: int
    sensors: list[str]
    partial: bool


class HealthPoint(BaseModel):
    date: str
    percent: float


class InclinationPoint(BaseModel):
    t: int                 # epoch ms
    pitch_deg: float
    roll_deg: float


class MtbaPoint(BaseModel):
    t: int
    mtba_s: float


class MtbaResponse(BaseModel):
    baseline_s: float
    window_s: float
    series: list[MtbaPoint]
    escalations: list[dict]

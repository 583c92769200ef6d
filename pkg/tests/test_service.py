import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from bridgewatch.alerting import ThresholdPolicy
from bridgewatch.pipeline import Pipeline, PipelineConfig, file_source
from bridgewatch.service import ApiConfig, create_app
from bridgewatch.signals import dump_sensors
from bridgewatch.simulator import (
    DamageSpec,
    Scenario,
    Vehicle,
    default_bridge,
    simulate_period,
    write_frames_ndjson,
)
from bridgewatch.store import Store

T0 = 1609459200
MS = 1000


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    """A store populated by a pipeline replay plus a TestClient over it."""
    root = tmp_path_factory.mktemp("svc")
    bridge = default_bridge(seed=1)      # full 29-sensor layout
    sc = Scenario("svc", T0, 300, traffic_per_day=0.0,
                  schedule=(Vehicle(40.0, 40.0, 60.0), Vehicle(150.0, 95.0, 70.0)),
                  noise_sigma=0.002)
    write_frames_ndjson(simulate_period(bridge, sc, seed=3), root / "frames.ndjson")
    dump_sensors(bridge.sensors.values(), root / "sensors.json")
    cfg = PipelineConfig(
        sensors_path=str(root / "sensors.json"),
        store_path=str(root / "store"),
        policies=[ThresholdPolicy("fixed25", indicator="euclid_eri", fixed_value=0.25)],
    )
    Pipeline(cfg).run(file_source(root / "frames.ndjson"))
    api = ApiConfig(store_path=str(root / "store"), sensors_path=str(root / "sensors.json"))
    client = TestClient(create_app(api))
    return client, Store(root / "store"), root


class TestEndpoints:
    def test_sensors_lists_full_layout(self, served):
        client, _, _ = served
        r = client.get("/sensors")
        assert r.status_code == 200
        assert len(r.json()) == 29

    def test_indicators_hourly_bucket_bound(self, served):
        client, _, _ = served
        r = client.get("/indicators", params={
            "sensor": "I", "dir": "e", "from": T0 * MS,
            "to": (T0 + 7 * 86400) * MS, "res": "1h"})
        assert r.status_code == 200
        assert 0 < len(r.json()) <= 168

    def test_indicators_match_store(self, served):
        client, store, _ = served
        r = client.get("/indicators", params={
            "sensor": "I", "dir": "e", "from": T0 * MS, "to": (T0 + 300) * MS})
        points = r.json()
        batch = store.query_indicators("I", T0, T0 + 300)
        assert len(points) == len(batch)
        np.testing.assert_allclose([p["eri"] for p in points], batch.eri("e"), rtol=0)

    def test_fft_same_bytes_as_core(self, served):
        client, store, _ = served
        frm, to = (T0 + 140) * MS, (T0 + 165) * MS
        r = client.get("/fft", params={"sensor": "I", "dir": "z", "from": frm,
                                       "to": to, "method": "fft"})
        assert r.status_code == 200
        payload = r.json()
        from bridgewatch.spectral import fft_magnitude
        g = store.query_raw("I", T0 + 140, T0 + 165)
        seg = g.z - g.z.mean()
        s = fft_magnitude(seg, g.rate)
        np.testing.assert_array_equal(payload["freqs"], s.freqs)
        np.testing.assert_array_equal(payload["power"], s.power)

    def test_welch_method(self, served):
        client, _, _ = served
        r = client.get("/fft", params={"sensor": "I", "dir": "z", "from": (T0 + 100) * MS,
                                       "to": (T0 + 160) * MS, "method": "welch"})
        assert r.status_code == 200
        body = r.json()
        assert body["method"] == "welch"
        assert len(body["freqs"]) > 0

    def test_timeseries_roundtrip(self, served):
        client, store, _ = served
        r = client.get("/timeseries", params={"sensor": "G", "from": (T0 + 40) * MS,
                                              "to": (T0 + 43) * MS})
        body = r.json()
        assert body["rate"] == 64
        assert len(body["x"]) == 3 * 64

    def test_displacement(self, served):
        client, _, _ = served
        r = client.get("/displacement", params={"sensor": "I", "dir": "z",
                                                "from": (T0 + 140) * MS,
                                                "to": (T0 + 170) * MS})
        assert r.status_code == 200
        assert len(r.json()["mm"]) == 30 * 64

    def test_scatter(self, served):
        client, _, _ = served
        r = client.get("/scatter", params={"sensor": "I", "dir": "y",
                                           "from": T0 * MS, "to": (T0 + 300) * MS})
        pts = r.json()
        assert len(pts) >= 290
        assert all(0.0 <= p["eci"] <= 2.0 for p in pts)

    def test_alerts_and_events(self, served):
        client, _, _ = served
        alerts = client.get("/alerts").json()
        assert len(alerts) >= 1
        assert all(a["value"] > a["limit"] for a in alerts)
        events = client.get("/events").json()
        assert len(events) >= 1

    def test_maxima(self, served):
        client, _, _ = served
        r = client.get("/maxima", params={"from": T0 * MS, "to": (T0 + 300) * MS,
                                          "res": "1m", "sensors": "I,G"})
        pts = r.json()
        assert {p["sensor"] for p in pts} == {"I", "G"}
        assert len(pts) == 10

    def test_inclination(self, served):
        client, _, _ = served
        r = client.get("/inclination", params={"sensor": "I", "from": T0 * MS,
                                               "to": (T0 + 600) * MS})
        assert r.status_code == 200
        assert len(r.json()) >= 1

    def test_mtba(self, served):
        client, _, _ = served
        r = client.get("/mtba")
        assert r.status_code == 200
        body = r.json()
        assert body["baseline_s"] == 86400.0

    def test_health_index_empty_without_artifact(self, served):
        client, _, _ = served
        assert client.get("/health-index").json() == []


class TestErrors:
    def test_unknown_sensor_404(self, served):
        client, _, _ = served
        r = client.get("/indicators", params={"sensor": "ZZ", "from": 0, "to": 1000})
        assert r.status_code == 404

    def test_malformed_query_400(self, served):
        client, _, _ = served
        r = client.get("/indicators", params={"sensor": "I", "from": "abc", "to": 5})
        assert r.status_code == 400
        r = client.get("/indicators", params={"sensor": "I", "from": 0, "to": 10,
                                              "res": "5m"})
        assert r.status_code == 400
        r = client.get("/fft", params={"sensor": "I", "from": 0, "to": 10,
                                       "method": "nope"})
        assert r.status_code == 400

    def test_empty_range_is_200_empty(self, served):
        client, _, _ = served
        r = client.get("/indicators", params={"sensor": "I", "from": 0, "to": 1000})
        assert r.status_code == 200
        assert r.json() == []

    def test_inverted_range_400(self, served):
        client, _, _ = served
        r = client.get("/indicators", params={"sensor": "I", "from": 10_000, "to": 0})
        assert r.status_code == 400


class TestPurity:
    def test_get_sequence_leaves_store_untouched(self, served):
        client, store, _ = served
        before = store.tree_digest()
        for _ in range(2):
            client.get("/sensors")
            client.get("/indicators", params={"sensor": "I", "dir": "e",
                                              "from": T0 * MS, "to": (T0 + 300) * MS})
            client.get("/alerts")
            client.get("/events")
            client.get("/mtba")
        assert store.tree_digest() == before

    def test_repeated_query_identical(self, served):
        client, _, _ = served
        params = {"sensor": "I", "dir": "e", "from": T0 * MS, "to": (T0 + 300) * MS}
        a = client.get("/indicators", params=params).content
        b = client.get("/indicators", params=params).content
        assert a == b

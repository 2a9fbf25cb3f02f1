import numpy as np
import pytest
from fastapi.testclient import TestClient
from rich.console import Console

from app import app
from utils.startup_banner import VERSION, build_startup_banner


@pytest.fixture
def client():
    return TestClient(app)


@pytest.fixture
def noise_payload():
    rng = np.random.default_rng(7)
    return {"delta": 0.1, "values": rng.standard_normal(400).tolist()}


def test_status(client):
    body = client.get("/status").json()
    assert body["jobs"] >= 1
    assert "version" in body and "precision" in body


def test_simulate_is_seeded(client):
    config = {"trawl": {"kind": "exp", "lambda": 1.0}, "marginal": {"kind": "negbin", "theta": 0.2},
              "delta": 0.1, "n": 50, "seed": 7, "tail_cutoff": 5.0}
    first = client.post("/simulate", json=config).json()
    second = client.post("/simulate", json=config).json()
    assert first == second
    assert len(first["values"]) == 50
    bad = client.post("/simulate", json={**config, "delta": -1.0})
    assert bad.status_code == 400


def test_estimate(client, noise_payload):
    response = client.post("/estimate", json={**noise_payload, "max_lag": 10})
    assert response.status_code == 200
    body = response.json()
    assert body["n"] == 400 and len(body["rows"]) == 11
    assert body["rows"][0]["t"] == 0.0


def test_estimate_of_a_constant_series_is_unprocessable(client):
    response = client.post("/estimate", json={"delta": 1.0, "values": [2.0] * 10})
    assert response.status_code == 422
    assert "DegenerateEstimateError" in response.json()["detail"]


def test_estimate_of_a_short_series_is_a_bad_request(client):
    response = client.post("/estimate", json={"delta": 1.0, "values": [1.0, 2.0]})
    assert response.status_code == 400


def test_slices_and_forecast(client, noise_payload):
    rows = client.post("/slices", json={**noise_payload, "horizons": [0.1, 1.0], "method": "acf"}).json()["rows"]
    assert [r["h"] for r in rows] == [0.1, 1.0]
    assert all(0.0 <= r["ratio_cap"] <= 1.0 for r in rows)

    body = client.post("/forecast", json={**noise_payload, "h_steps": 2, "predictor": "naive"}).json()
    assert body["forecast"] == pytest.approx(noise_payload["values"][-1])
    assert not body["fallback"]


def test_dm_test(client):
    body = client.post("/dm-test", json={"loss_a": [1.0] * 20, "loss_b": [2.0] * 20, "h": 2}).json()
    assert body["dominance"] and body["statistic"] is None and body["p_value"] == 0.0
    assert client.post("/dm-test", json={"loss_a": [1.0] * 5, "loss_b": [2.0] * 5}).status_code == 400
    assert client.post("/dm-test", json={"loss_a": [1.0] * 20, "loss_b": [2.0] * 20, "h": 0}).status_code == 422


def test_admin_reload_needs_a_token(client, monkeypatch):
    monkeypatch.delenv("ADMIN_TOKEN", raising=False)
    assert client.post("/admin/reload-config").status_code == 403
    monkeypatch.setenv("ADMIN_TOKEN", "secret")
    assert client.post("/admin/reload-config", headers={"X-Admin-Token": "wrong"}).status_code == 401
    response = client.post("/admin/reload-config", headers={"X-Admin-Token": "secret"})
    assert response.status_code == 200
    assert response.json()["settings"]["PRECISION"] >= 1


def test_lifespan_marks_the_app_ready(capsys):
    with TestClient(app) as started:
        body = started.get("/status").json()
    assert body["status"] == "ready" and body["uptime_s"] >= 0.0


def test_startup_banner_lists_the_server():
    console = Console(record=True, width=100)
    console.print(build_startup_banner("127.0.0.1", 9000, jobs=3))
    text = console.export_text()
    assert f"Trawlkit v{VERSION}" in text
    assert "http://127.0.0.1:9000/docs" in text and "Workers:" in text

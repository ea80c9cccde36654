from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.api import main as api
from app.data.manifest import read_mask, write_image, write_samples
from app.nn.network import build
from app.train.checkpoint import save_checkpoint


@pytest.fixture
def client():
    api._load.cache_clear()
    return TestClient(api.app)


@pytest.fixture
def served(tmp_path, monkeypatch, tiny_run):
    path = save_checkpoint(tmp_path / "ckpt", build(tiny_run.network), tiny_run, step=4, epoch=2)
    monkeypatch.setenv("DTNET_CHECKPOINT", str(path))
    return path


def test_health(client):
    assert client.get("/health").json() == {"status": "ok"}


def test_no_checkpoint_configured(client):
    r = client.get("/model")
    assert r.status_code == 404
    assert r.json()["detail"]["error"] == "no_checkpoint"


def test_missing_checkpoint_directory(client, tmp_path, monkeypatch):
    monkeypatch.setenv("DTNET_CHECKPOINT", str(tmp_path / "gone"))
    assert client.get("/model").json()["detail"]["error"] == "missing_checkpoint"


def test_model_description(client, served):
    body = client.get("/model").json()
    assert body["step"] == 4 and body["epoch"] == 2
    assert body["network"]["placement"] == "I"
    assert body["parameters"] > 0


def test_predict_writes_maps(client, served, tmp_path, synth_small):
    sample = synth_small[1][0]
    image_path = tmp_path / "in" / "tile.png"
    write_image(image_path, sample.image)

    r = client.post("/predict", json={"image_path": str(image_path), "threshold": 0.5})
    assert r.status_code == 200
    body = r.json()
    assert set(body["outputs"]) == {"road", "edge"}
    mask = read_mask(tmp_path / "in" / "predictions" / "tile_road_mask.png")
    assert mask.shape == (32, 32)
    assert int(mask.sum()) == body["positive_pixels"]["road"]

    events = [json.loads(line) for line in (tmp_path / "logs" / "audit.jsonl").read_text().splitlines()]
    assert events[-1]["type"] == "predict" and events[-1]["blocked"] is False


def test_predict_errors(client, served, tmp_path):
    r = client.post("/predict", json={"image_path": str(tmp_path / "nope.png")})
    assert r.status_code == 404

    odd = tmp_path / "odd.png"
    write_image(odd, np.zeros((24, 24, 3), dtype=np.uint8))
    r = client.post("/predict", json={"image_path": str(odd)})
    assert r.status_code == 400
    assert r.json()["detail"]["error"] == "bad_input"

    r = client.post("/predict", json={"image_path": str(odd), "threshold": 1.5})
    assert r.status_code == 422


def test_evaluate_endpoint(client, served, tmp_path, synth_small):
    write_samples(synth_small[1], tmp_path / "data", "test")
    r = client.post("/evaluate", json={"root": str(tmp_path / "data"), "mode": "micro"})
    assert r.status_code == 200
    body = r.json()
    assert body["mode"] == "micro"
    assert set(body["metrics"]) == {"IOU", "F1", "Recall", "Precision"}

    r = client.post("/evaluate", json={"root": str(tmp_path / "data"), "split": "train"})
    assert r.status_code == 404


def test_served_network_stays_in_eval_mode(client, served, tmp_path, synth_small):
    image_path = tmp_path / "in" / "tile.png"
    write_image(image_path, synth_small[1][0].image)
    counts = []
    for _ in range(2):
        r = client.post("/predict", json={"image_path": str(image_path)})
        assert r.status_code == 200
        counts.append(r.json()["positive_pixels"])
    assert counts[0] == counts[1]
    net = api._load(str(served)).net
    assert not any(m.training for m in net.modules())

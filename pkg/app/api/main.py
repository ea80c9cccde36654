from __future__ import annotations

import time
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from app.core import settings
from app.core.audit import write_audit_event
from app.core.errors import ConfigurationError, ShapeError
from app.core.log import configure_logging, get_logger
from app.data.manifest import read_image, write_image, write_mask
from app.eval.evaluate import evaluate, predict_batch
from app.nn.network import count_parameters
from app.train.checkpoint import Checkpoint, load_checkpoint

configure_logging()
logger = get_logger(__name__)

app = FastAPI(title="DTNet Road Detection API")


class PredictRequest(BaseModel):
    image_path: str
    threshold: float = Field(0.5, gt=0, lt=1)
    out_dir: Optional[str] = None


class EvaluateRequest(BaseModel):
    root: str
    split: Literal["train", "test"] = "test"
    mode: Optional[Literal["macro", "micro"]] = None
    threshold: Optional[float] = Field(None, gt=0, lt=1)


def _checkpoint_path() -> Path:
    path = settings.default_checkpoint()
    if path is None:
        raise HTTPException(status_code=404, detail={"error": "no_checkpoint", "message": "DTNET_CHECKPOINT is not set"})
    return path


@lru_cache(maxsize=4)
def _load(path: str) -> Checkpoint:
    return load_checkpoint(Path(path))


def _checkpoint() -> Checkpoint:
    path = _checkpoint_path()
    try:
        return _load(str(path))
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail={"error": "missing_checkpoint", "message": str(e)})
    except ConfigurationError as e:
        raise HTTPException(status_code=400, detail={"error": "bad_checkpoint", "message": str(e)})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/model")
def model():
    ckpt = _checkpoint()
    return {
        "checkpoint": str(ckpt.path),
        "network": ckpt.config.network.model_dump(mode="json"),
        "parameters": count_parameters(ckpt.net),
        "step": ckpt.step,
        "epoch": ckpt.epoch,
    }


@app.post("/predict")
def predict(req: PredictRequest):
    t0 = time.time()
    ckpt = _checkpoint()
    image_path = Path(req.image_path)
    if not image_path.exists():
        raise HTTPException(status_code=404, detail={"error": "missing_image", "message": str(image_path)})

    try:
        image = read_image(image_path)
        pred = predict_batch(ckpt.net, [image])
    except ShapeError as e:
        write_audit_event({"type": "predict", "image": str(image_path), "blocked": True, "error": str(e)})
        raise HTTPException(status_code=400, detail={"error": "bad_input", "message": str(e)})

    out_dir = Path(req.out_dir) if req.out_dir else image_path.parent / "predictions"
    stem = image_path.stem
    outputs = {}
    positives = {}
    maps = {"road": pred.road_prob}
    if pred.dual_task:
        maps["edge"] = pred.edge_prob
    for name, prob in maps.items():
        p = prob[0, 0].cpu().numpy()
        binary = (p >= req.threshold).astype(np.uint8)
        prob_path = out_dir / f"{stem}_{name}_prob.png"
        mask_path = out_dir / f"{stem}_{name}_mask.png"
        write_image(prob_path, p)
        write_mask(mask_path, binary)
        outputs[name] = {"probability": str(prob_path), "mask": str(mask_path)}
        positives[name] = int(binary.sum())

    latency_ms = int((time.time() - t0) * 1000)
    write_audit_event({
        "type": "predict",
        "image": str(image_path),
        "checkpoint": str(ckpt.path),
        "threshold": req.threshold,
        "positive_pixels": positives,
        "blocked": False,
        "latency_ms": latency_ms,
    })
    return {"image": str(image_path), "outputs": outputs, "positive_pixels": positives, "latency_ms": latency_ms}


@app.post("/evaluate")
def evaluate_endpoint(req: EvaluateRequest):
    path = _checkpoint_path()
    try:
        report = evaluate(path, Path(req.root), req.split, req.mode, req.threshold)
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail={"error": "missing_data", "message": str(e)})
    except (ConfigurationError, ShapeError) as e:
        raise HTTPException(status_code=400, detail={"error": "bad_input", "message": str(e)})
    return {"mode": report.mode, "metrics": report.as_percent()}

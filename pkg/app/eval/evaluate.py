from __future__ import annotations

import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from app.core.audit import write_audit_event
from app.core.config import ManifestSource
from app.core.log import get_logger
from app.core.types import Prediction, Sample
from app.data.dataset import image_to_tensor, load_split
from app.eval.metrics import MetricCounts, MetricReport, Mode, confusion_counts, evaluate_counts
from app.nn.network import DTNet
from app.train.checkpoint import load_checkpoint

logger = get_logger(__name__)

ProbMaps = Tuple[np.ndarray, Optional[np.ndarray]]


@torch.no_grad()
def predict_batch(net: DTNet, images: Sequence[np.ndarray]) -> Prediction:
    """Eval-mode forward pass over H x W x 3 images of one size.

    A net already in eval mode is only read, so a shared loaded checkpoint is
    never switched back and forth; a training net is restored afterwards.
    """
    param = next(net.parameters())
    batch = torch.stack([image_to_tensor(im) for im in images]).to(device=param.device, dtype=param.dtype)
    if not net.training:
        return net(batch)
    net.eval()
    try:
        return net(batch)
    finally:
        net.train(True)


def predict(net: DTNet, samples: Sequence[Sample], batch_size: int = 8) -> List[ProbMaps]:
    """Per-sample (road_prob, edge_prob) maps, H x W float arrays; edge_prob is None for single-task nets."""
    out: List[ProbMaps] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        pred = predict_batch(net, [s.image for s in chunk])
        road = pred.road_prob[:, 0].cpu().numpy()
        edge = pred.edge_prob[:, 0].cpu().numpy() if pred.dual_task else None
        for i in range(len(chunk)):
            out.append((road[i], None if edge is None else edge[i]))
    return out


def sample_counts(net: DTNet, samples: Sequence[Sample], threshold: float = 0.5, batch_size: int = 8) -> List[MetricCounts]:
    maps = predict(net, samples, batch_size)
    return [confusion_counts(road, s.area, threshold) for (road, _), s in zip(maps, samples)]


def evaluate_net(
    net: DTNet,
    samples: Sequence[Sample],
    mode: Mode = "macro",
    threshold: float = 0.5,
    batch_size: int = 8,
) -> MetricReport:
    return evaluate_counts(sample_counts(net, samples, threshold, batch_size), mode)


def evaluate(
    checkpoint: Path,
    root: Optional[Path] = None,
    split: str = "test",
    mode: Optional[Mode] = None,
    threshold: Optional[float] = None,
) -> MetricReport:
    """
    Evaluate a saved checkpoint. root=None reuses the checkpoint's own data
    source (a synthetic source is regenerated from its seed).
    """
    t0 = time.time()
    ckpt = load_checkpoint(checkpoint)
    cfg = ckpt.config
    source = cfg.data if root is None else ManifestSource(root=Path(root))
    samples = load_split(source, split)
    mode = mode or cfg.eval_mode
    threshold = threshold if threshold is not None else cfg.threshold

    report = evaluate_net(ckpt.net, samples, mode, threshold, cfg.batch_size)
    logger.info("evaluated %s on %s/%s: %s", checkpoint, source.kind, split, report.as_percent())
    write_audit_event({
        "type": "evaluate",
        "checkpoint": str(checkpoint),
        "source": source.kind,
        "split": split,
        "n_images": len(samples),
        "mode": mode,
        "threshold": threshold,
        "metrics": report.as_dict(),
        "latency_ms": int((time.time() - t0) * 1000),
    })
    return report

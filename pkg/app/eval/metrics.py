"""
Confusion counts and IOU / F1 / Recall / Precision.

micro: pool counts over all images, then compute the metrics once.
macro: compute the metrics per image, then take the arithmetic mean.

Degenerate denominators: IOU = 1 when TP+FP+FN = 0; precision (recall) = 1
when TP+FP (TP+FN) = 0; F1 = 0 when precision + recall = 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, List, Literal, Sequence

import numpy as np

from app.core.errors import ShapeError

Mode = Literal["micro", "macro"]
COLUMNS = ("iou", "f1", "recall", "precision")
TABLE_COLUMNS = ("IOU", "F1", "Recall", "Precision")


@dataclass(frozen=True)
class MetricCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "MetricCounts") -> "MetricCounts":
        return MetricCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    iou: float
    f1: float
    recall: float
    precision: float
    mode: Mode = "macro"

    def as_dict(self) -> dict:
        return asdict(self)

    def as_percent(self) -> dict:
        """Table column order, percentages rounded to 2 decimals."""
        return {
            label: round(100.0 * getattr(self, name), 2)
            for label, name in zip(TABLE_COLUMNS, COLUMNS)
        }


def _as_array(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.asarray(x)


def confusion_counts(p, t, threshold: float = 0.5) -> MetricCounts:
    """Pixelwise counts with prediction = (p >= threshold)."""
    p = _as_array(p)
    t = _as_array(t)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    pred = p >= threshold
    truth = t.astype(bool)
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    tn = int(pred.size - tp - fp - fn)
    return MetricCounts(tp, fp, fn, tn)


def metrics_from_counts(c: MetricCounts, mode: Mode = "micro") -> MetricReport:
    denom_iou = c.tp + c.fp + c.fn
    iou = 1.0 if denom_iou == 0 else c.tp / denom_iou
    precision = (1.0 if c.tp == 0 else 0.0) if c.tp + c.fp == 0 else c.tp / (c.tp + c.fp)
    recall = (1.0 if c.tp == 0 else 0.0) if c.tp + c.fn == 0 else c.tp / (c.tp + c.fn)
    pr = precision + recall
    f1 = 0.0 if pr == 0 else 2.0 * precision * recall / pr
    return MetricReport(iou=iou, f1=f1, recall=recall, precision=precision, mode=mode)


def evaluate_counts(counts: Sequence[MetricCounts], mode: Mode = "macro") -> MetricReport:
    if not counts:
        raise ShapeError("cannot evaluate an empty set")
    if mode == "micro":
        pooled = MetricCounts()
        for c in counts:
            pooled = pooled + c
        return metrics_from_counts(pooled, "micro")
    if mode != "macro":
        raise ValueError(f"unknown mode {mode!r}")
    reports = [metrics_from_counts(c) for c in counts]
    return MetricReport(
        iou=float(np.mean([r.iou for r in reports])),
        f1=float(np.mean([r.f1 for r in reports])),
        recall=float(np.mean([r.recall for r in reports])),
        precision=float(np.mean([r.precision for r in reports])),
        mode="macro",
    )


def evaluate_set(
    predictions: Iterable,
    targets: Iterable,
    mode: Mode = "macro",
    threshold: float = 0.5,
) -> MetricReport:
    predictions = list(predictions)
    targets = list(targets)
    if len(predictions) != len(targets):
        raise ShapeError(f"{len(predictions)} predictions for {len(targets)} targets")
    counts: List[MetricCounts] = [confusion_counts(p, t, threshold) for p, t in zip(predictions, targets)]
    return evaluate_counts(counts, mode)

"""
Hybrid objective: a1 * cross-entropy + a2 * IoU + a3 * focal, averaged over the batch.

Component losses reduce per image: a 2-D map (H x W) gives a scalar, a batched
map (N x H x W or N x 1 x H x W) gives a length-N vector.
"""
from __future__ import annotations

from typing import Dict, Optional

import torch

from app.core.config import LossParams
from app.core.errors import ShapeError

PROB_EPS = 1e-7


def _image_dims(x: torch.Tensor) -> tuple[int, ...]:
    if x.dim() >= 3:
        return tuple(range(1, x.dim()))
    return tuple(range(x.dim()))


def _check(p: torch.Tensor, t: torch.Tensor, where: str) -> None:
    if p.shape != t.shape:
        raise ShapeError(f"{where}: prediction {tuple(p.shape)} and target {tuple(t.shape)} differ")


def bce_loss(p: torch.Tensor, t: torch.Tensor, eps: float = PROB_EPS) -> torch.Tensor:
    _check(p, t, "bce_loss")
    p = p.clamp(eps, 1.0 - eps)
    per_pixel = -(t * torch.log(p) + (1.0 - t) * torch.log1p(-p))
    return per_pixel.mean(dim=_image_dims(per_pixel))


def iou_loss(
    p: torch.Tensor,
    t: torch.Tensor,
    stabilizer: float = 1e-6,
    log: bool = False,
) -> torch.Tensor:
    """Image-level soft Jaccard: 1 - J (or -ln J when log=True)."""
    _check(p, t, "iou_loss")
    dims = _image_dims(p)
    inter = (t * p).sum(dim=dims)
    union = t.sum(dim=dims) + p.sum(dim=dims) - inter
    jaccard = (inter + stabilizer) / (union + stabilizer)
    if log:
        return -torch.log(jaccard)
    return 1.0 - jaccard


def focal_loss(
    p: torch.Tensor,
    t: torch.Tensor,
    lam: float = 0.75,
    gamma: float = 2.0,
    eps: float = PROB_EPS,
) -> torch.Tensor:
    _check(p, t, "focal_loss")
    p = p.clamp(eps, 1.0 - eps)
    positive = lam * torch.pow(1.0 - p, gamma) * t * torch.log(p)
    negative = (1.0 - lam) * torch.pow(p, gamma) * (1.0 - t) * torch.log1p(-p)
    per_pixel = -positive - negative
    return per_pixel.mean(dim=_image_dims(per_pixel))


def loss_terms(
    road: torch.Tensor,
    area: torch.Tensor,
    edge: Optional[torch.Tensor],
    edge_target: Optional[torch.Tensor],
    params: LossParams,
) -> Dict[str, torch.Tensor]:
    """Per-image component losses, each of shape (N,)."""
    if road.dim() < 3:
        raise ShapeError("hybrid loss expects a batch (N x ...) of maps")
    if road.shape[0] == 0:
        raise ShapeError("hybrid loss needs at least one image")
    terms = {
        "bce": bce_loss(road, area, params.prob_eps),
        "iou": iou_loss(road, area, params.stabilizer, params.iou_log),
    }
    if edge is not None:
        if edge_target is None:
            raise ShapeError("edge prediction given without an edge target")
        terms["focal"] = focal_loss(edge, edge_target, params.lam, params.gamma, params.prob_eps)
    return terms


def combine(terms: Dict[str, torch.Tensor], params: LossParams) -> torch.Tensor:
    per_image = params.a1 * terms["bce"] + params.a2 * terms["iou"]
    if "focal" in terms:
        per_image = per_image + params.a3 * terms["focal"]
    return per_image.mean()


def hybrid_loss(
    road: torch.Tensor,
    area: torch.Tensor,
    edge: Optional[torch.Tensor] = None,
    edge_target: Optional[torch.Tensor] = None,
    params: Optional[LossParams] = None,
) -> torch.Tensor:
    """(1/N) sum_i [a1 L_ce + a2 L_iou + a3 L_fl]; the focal term is dropped when edge is None."""
    params = params or LossParams()
    return combine(loss_terms(road, area, edge, edge_target, params), params)

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from app.core.errors import ShapeError

# N x C x H x W activations flowing between blocks (E^i, D^i).
FeatureMap = torch.Tensor


@dataclass
class Sample:
    """
    Aligned triple used for training and evaluation.

    image: H x W x 3 float32 in [0, 1]
    area:  H x W uint8 in {0, 1}   (road area label t)
    edge:  H x W uint8 in {0, 1}   (road edge label t')
    """
    image: np.ndarray
    area: np.ndarray
    edge: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ShapeError(f"image must be H x W x 3, got {self.image.shape}")
        hw = self.image.shape[:2]
        if self.area.shape != hw or self.edge.shape != hw:
            raise ShapeError(
                f"image {hw}, area {self.area.shape} and edge {self.edge.shape} must share H x W"
            )
        for label, mask in (("area", self.area), ("edge", self.edge)):
            if not np.isin(mask, (0, 1)).all():
                raise ShapeError(f"{label} mask must contain only 0/1")

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


@dataclass
class Prediction:
    """Sigmoid outputs, N x 1 x H x W. edge_prob is None for single-task networks."""
    road_prob: torch.Tensor
    edge_prob: Optional[torch.Tensor] = None

    @property
    def dual_task(self) -> bool:
        return self.edge_prob is not None

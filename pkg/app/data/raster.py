"""
Tiling and bilinear resizing of aligned (image, mask) rasters.

Rasters are numpy arrays, H x W (masks) or H x W x C (images). Offsets are
(row, col) of the top-left corner.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
import torch
from torch.nn import functional as F

from app.core.errors import ConfigurationError, ShapeError

MIN_TILE = 16


@dataclass(frozen=True)
class TileSpec:
    crop_size: int
    resize_to: Optional[int] = None
    strategy: Literal["grid", "random"] = "grid"
    count: int = 1  # random strategy: tiles drawn per raster
    seed: int = 0
    drop_empty: bool = False  # discard tiles whose mask has no road pixel

    def __post_init__(self) -> None:
        if self.crop_size < MIN_TILE:
            raise ConfigurationError(f"crop_size must be >= {MIN_TILE}")
        if self.resize_to is not None and self.resize_to < MIN_TILE:
            raise ConfigurationError(f"resize_to must be >= {MIN_TILE}")
        if self.strategy not in ("grid", "random"):
            raise ConfigurationError(f"unknown tiling strategy {self.strategy!r}")
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")


@dataclass
class Tile:
    image: np.ndarray
    mask: np.ndarray
    offset: Tuple[int, int]


def binarize_mask(raw: np.ndarray) -> np.ndarray:
    """0/255 masks threshold at 128, 0/1 masks at 0.5."""
    raw = np.asarray(raw)
    if raw.ndim == 3:
        raw = raw[..., 0]
    if raw.max(initial=0) > 1:
        return (raw >= 128).astype(np.uint8)
    return (raw >= 0.5).astype(np.uint8)


def resize_bilinear(raster: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Half-pixel-centre bilinear resize to (height, width); dtype is preserved."""
    h, w = int(size[0]), int(size[1])
    if h < 1 or w < 1:
        raise ShapeError(f"target size must be positive, got {size}")
    raster = np.asarray(raster)
    if raster.shape[:2] == (h, w):
        return raster.copy()
    planar = raster[..., None] if raster.ndim == 2 else raster
    t = torch.from_numpy(np.ascontiguousarray(planar, dtype=np.float64)).permute(2, 0, 1).unsqueeze(0)
    out = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=False)
    out = out.squeeze(0).permute(1, 2, 0).numpy()
    if raster.ndim == 2:
        out = out[..., 0]
    if np.issubdtype(raster.dtype, np.integer):
        info = np.iinfo(raster.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(raster.dtype)


def resize_mask(mask: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Resize a {0,1} mask bilinearly and re-binarize at 0.5."""
    resized = resize_bilinear(np.asarray(mask, dtype=np.float64), size)
    return (resized >= 0.5).astype(np.uint8)


def tile_offsets(height: int, width: int, spec: TileSpec) -> List[Tuple[int, int]]:
    crop = spec.crop_size
    if height < crop or width < crop:
        raise ShapeError(f"raster {height}x{width} is smaller than crop_size {crop}")
    if spec.strategy == "grid":
        # stride = crop; partial edge tiles are discarded
        return [(r, c) for r in range(0, height - crop + 1, crop) for c in range(0, width - crop + 1, crop)]
    rng = np.random.default_rng(spec.seed)
    rows = rng.integers(0, height - crop + 1, size=spec.count)
    cols = rng.integers(0, width - crop + 1, size=spec.count)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def tile(image: np.ndarray, mask: np.ndarray, spec: TileSpec) -> List[Tile]:
    if image.shape[:2] != mask.shape[:2]:
        raise ShapeError(f"image {image.shape[:2]} and mask {mask.shape[:2]} are not aligned")
    crop = spec.crop_size
    tiles: List[Tile] = []
    for r, c in tile_offsets(image.shape[0], image.shape[1], spec):
        img = image[r:r + crop, c:c + crop].copy()
        msk = mask[r:r + crop, c:c + crop].copy()
        if spec.resize_to is not None and spec.resize_to != crop:
            img = resize_bilinear(img, (spec.resize_to, spec.resize_to))
            msk = resize_mask(msk, (spec.resize_to, spec.resize_to))
        if spec.drop_empty and not msk.any():
            continue
        tiles.append(Tile(image=img, mask=msk, offset=(r, c)))
    return tiles

"""
Seeded synthetic road imagery for desk-scale experiments.

Each sample: textured background (noise + low-frequency shading) crossed by
1-3 roads (polylines or quadratic curves, 3-7 px wide). Every sample has at
least one road pixel. Per-sample generators are spawned from one
SeedSequence, so sample i depends only on (seed, i).
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np
from scipy import ndimage

from app.core.errors import ConfigurationError
from app.core.types import Sample
from app.data.edges import derive_edge_mask

SYNTH_EDGE_WIDTH = 1


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    base = rng.uniform((0.20, 0.30, 0.12), (0.42, 0.52, 0.30))
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (h, w, 3)), sigma=(1.2, 1.2, 0))
    texture *= 0.05 / (texture.std() + 1e-12)
    shading = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (h, w)), sigma=max(h, w) / 6.0)
    shading *= 0.08 / (np.abs(shading).max() + 1e-12)
    yy, xx = np.mgrid[0:h, 0:w]
    gy, gx = rng.uniform(-0.08, 0.08, size=2)
    ramp = gy * (yy / h - 0.5) + gx * (xx / w - 0.5)
    return base + texture + (shading + ramp)[..., None]


def _border_point(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    side = rng.integers(4)
    if side == 0:
        return np.array([0.0, rng.uniform(0, w - 1)])
    if side == 1:
        return np.array([h - 1.0, rng.uniform(0, w - 1)])
    if side == 2:
        return np.array([rng.uniform(0, h - 1), 0.0])
    return np.array([rng.uniform(0, h - 1), w - 1.0])


def _centreline(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Dense (row, col) points along one road."""
    start, end = _border_point(rng, h, w), _border_point(rng, h, w)
    n = 4 * max(h, w)
    t = np.linspace(0.0, 1.0, n)[:, None]
    if rng.random() < 0.5:
        ctrl = np.array([rng.uniform(0, h - 1), rng.uniform(0, w - 1)])
        return (1 - t) ** 2 * start + 2 * (1 - t) * t * ctrl + t ** 2 * end
    knots = [start]
    for _ in range(int(rng.integers(1, 3))):
        knots.append(np.array([rng.uniform(0, h - 1), rng.uniform(0, w - 1)]))
    knots.append(end)
    per = max(2, n // (len(knots) - 1))
    segments = [a + np.linspace(0.0, 1.0, per)[:, None] * (b - a) for a, b in zip(knots[:-1], knots[1:])]
    return np.concatenate(segments)


def _rasterize(points: np.ndarray, width: int, h: int, w: int) -> np.ndarray:
    centre = np.zeros((h, w), dtype=bool)
    rows = np.clip(np.rint(points[:, 0]).astype(int), 0, h - 1)
    cols = np.clip(np.rint(points[:, 1]).astype(int), 0, w - 1)
    centre[rows, cols] = True
    dist = ndimage.distance_transform_edt(~centre)
    return dist <= (width - 1) / 2.0


def _road_scene(rng: np.random.Generator, h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    while True:
        area = np.zeros((h, w), dtype=bool)
        for _ in range(int(rng.integers(1, 4))):
            area |= _rasterize(_centreline(rng, h, w), int(rng.integers(3, 8)), h, w)
        if area.any():
            break
    image = _background(rng, h, w)
    tone = rng.uniform(0.45, 0.70)
    road = tone + rng.normal(0.0, 0.025, (h, w, 1)) + np.array([0.0, 0.0, 0.02])
    image = np.where(area[..., None], road, image)
    return np.clip(image, 0.0, 1.0).astype(np.float32), area.astype(np.uint8)


def synth_sample(rng: np.random.Generator, size: int, name: str = "") -> Sample:
    image, area = _road_scene(rng, size, size)
    return Sample(image=image, area=area, edge=derive_edge_mask(area, SYNTH_EDGE_WIDTH), name=name)


def synth_generate(n: int, size: int, seed: int) -> List[Sample]:
    if size % 16:
        raise ConfigurationError(f"synthetic size {size} must be divisible by 16")
    if n < 0:
        raise ConfigurationError("sample count must be >= 0")
    children = np.random.SeedSequence(seed).spawn(n)
    return [synth_sample(np.random.default_rng(ss), size, name=f"synth_{seed}_{i:05d}") for i, ss in enumerate(children)]


def synth_raster(height: int, width: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Large stand-in raster: 8-bit RGB image and 0/255 mask, for tiling recipes."""
    image, area = _road_scene(np.random.default_rng(seed), height, width)
    return (np.rint(image * 255.0)).astype(np.uint8), (area * 255).astype(np.uint8)

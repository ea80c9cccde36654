"""
Preprocessing recipes for the three road datasets, and `prep`, which applies
one to a manifest of large source rasters.

    munich         random 512 crops -> bilinear 256   533 tiles  484 / 49
    massachusetts  random 256 crops                   6000 tiles 5400 / 600
    loveda         1024 rasters -> bilinear 512,      976 / 294
                   roadless tiles removed
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np

from app.core.errors import ConfigurationError
from app.core.log import get_logger
from app.core.types import Sample
from app.data.edges import DEFAULT_EDGE_WIDTH, derive_edge_mask
from app.data.manifest import DatasetManifest, load_manifest, read_mask, read_raw, write_samples
from app.data.raster import Tile, TileSpec, tile

logger = get_logger(__name__)


@dataclass(frozen=True)
class Recipe:
    name: str
    crop_size: int
    resize_to: Optional[int]
    strategy: Literal["grid", "random"]
    total: Optional[int]  # tiles to draw overall; None keeps every grid tile
    n_train: int
    n_test: int
    drop_empty: bool = False

    @property
    def output_size(self) -> int:
        return self.resize_to or self.crop_size

    @property
    def train_fraction(self) -> float:
        return self.n_train / (self.n_train + self.n_test)

    def tile_spec(self, seed: int, count: int = 1) -> TileSpec:
        return TileSpec(
            crop_size=self.crop_size,
            resize_to=self.resize_to,
            strategy=self.strategy,
            count=count,
            seed=seed,
            drop_empty=self.drop_empty,
        )

    def split_sizes(self, n_tiles: int) -> tuple[int, int]:
        """Train/test sizes for n_tiles, preserving the recipe's ratio."""
        if self.total is not None and n_tiles == self.total:
            return self.n_train, self.n_test
        n_train = int(round(n_tiles * self.train_fraction))
        if n_tiles > 1:
            n_train = min(max(n_train, 1), n_tiles - 1)
        return n_train, n_tiles - n_train


RECIPES: Dict[str, Recipe] = {
    "munich": Recipe("munich", 512, 256, "random", 533, 484, 49),
    "massachusetts": Recipe("massachusetts", 256, None, "random", 6000, 5400, 600),
    "loveda": Recipe("loveda", 1024, 512, "grid", None, 976, 294, drop_empty=True),
}


def get_recipe(name: str) -> Recipe:
    try:
        return RECIPES[name.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None


def tile_sources(
    source: DatasetManifest,
    recipe: Recipe,
    seed: int,
    total: Optional[int] = None,
) -> List[Tile]:
    """Tile every source raster; random recipes spread `total` draws evenly over rasters."""
    total = total if total is not None else recipe.total
    n_sources = len(source.pairs)
    if n_sources == 0:
        raise FileNotFoundError(f"manifest {source.path} lists no rasters")
    per_raster = math.ceil(total / n_sources) if total is not None else 1
    seeds = np.random.SeedSequence(seed).generate_state(n_sources)

    tiles: List[Tile] = []
    for (image_rel, mask_rel), raster_seed in zip(source.pairs, seeds):
        image = read_raw(source.resolve(image_rel))
        if image.ndim == 2:
            image = np.repeat(image[..., None], 3, axis=2)
        image = image[..., :3]
        mask = read_mask(source.resolve(mask_rel))
        spec = recipe.tile_spec(seed=int(raster_seed), count=per_raster)
        tiles.extend(tile(image, mask, spec))
    if recipe.strategy == "random" and total is not None:
        tiles = tiles[:total]
    return tiles


def prep(
    source_path: Path,
    recipe_name: str,
    out_root: Path,
    seed: int,
    total: Optional[int] = None,
    edge_width: int = DEFAULT_EDGE_WIDTH,
) -> Dict[str, DatasetManifest]:
    """
    Apply a recipe to a manifest of source rasters and write train/test splits
    under out_root in the standard layout.
    """
    recipe = get_recipe(recipe_name)
    source = load_manifest(source_path)
    ok, problems = source.validate()
    if not ok:
        raise FileNotFoundError("; ".join(problems[:5]))

    tiles = tile_sources(source, recipe, seed, total)
    order = np.random.default_rng(seed).permutation(len(tiles))
    n_train, _ = recipe.split_sizes(len(tiles))

    samples: List[Sample] = []
    for rank, idx in enumerate(order):
        t = tiles[idx]
        image = t.image.astype(np.float32) / 255.0 if t.image.dtype == np.uint8 else t.image.astype(np.float32)
        samples.append(Sample(
            image=image,
            area=t.mask,
            edge=derive_edge_mask(t.mask, edge_width),
            name=f"{recipe.name}_{rank:05d}",
        ))

    out = {
        "train": write_samples(samples[:n_train], out_root, "train"),
        "test": write_samples(samples[n_train:], out_root, "test"),
    }
    logger.info(
        "prep %s: %d tiles of %dpx -> %d train / %d test",
        recipe.name, len(samples), recipe.output_size, len(out["train"].pairs), len(out["test"].pairs),
    )
    return out

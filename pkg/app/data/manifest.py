"""
On-disk datasets.

    <root>/{train,test}/images/<name>.png   RGB, 8-bit
    <root>/{train,test}/masks/<name>.png    grayscale 0/255
    <root>/{train,test}/edges/<name>.png    grayscale 0/255 (optional)
    <root>/{train,test}/manifest.txt        "images/<name>.png<TAB>masks/<name>.png" per line

A manifest file may also list arbitrary raster pairs (paths relative to the
manifest's directory); `prep` consumes those.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np
from PIL import Image

from app.core.log import get_logger
from app.core.types import Sample
from app.data.edges import DEFAULT_EDGE_WIDTH, derive_edge_mask
from app.data.raster import binarize_mask

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.txt"
SPLITS = ("train", "test")


@dataclass
class DatasetManifest:
    root: Path
    pairs: List[Tuple[str, str]] = field(default_factory=list)
    split: str = "train"

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def validate(self) -> Tuple[bool, list[str]]:
        """Every listed pair exists and image/mask share pixel dimensions."""
        problems: list[str] = []
        for image_rel, mask_rel in self.pairs:
            image_path, mask_path = self.resolve(image_rel), self.resolve(mask_rel)
            missing = [str(p) for p in (image_path, mask_path) if not p.exists()]
            if missing:
                problems.append(f"missing: {', '.join(missing)}")
                continue
            with Image.open(image_path) as im, Image.open(mask_path) as mk:
                if im.size != mk.size:
                    problems.append(f"{image_rel} is {im.size}, {mask_rel} is {mk.size}")
        return (not problems), problems


def read_image(path: Path) -> np.ndarray:
    """RGB float32 in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def read_raw(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im)


def read_mask(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return binarize_mask(np.asarray(im.convert("L")))


def write_image(path: Path, image: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def write_mask(path: Path, mask: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)


def load_manifest(path: Path) -> DatasetManifest:
    """path is a manifest file or a directory containing manifest.txt."""
    path = Path(path)
    file = path / MANIFEST_NAME if path.is_dir() else path
    if not file.exists():
        raise FileNotFoundError(f"Missing manifest: {file}")
    pairs: List[Tuple[str, str]] = []
    for lineno, line in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{file}:{lineno}: expected '<image>\\t<mask>'")
        pairs.append((parts[0], parts[1]))
    split = file.parent.name if file.parent.name in SPLITS else "train"
    return DatasetManifest(root=file.parent, pairs=pairs, split=split)


def write_manifest(manifest: DatasetManifest) -> Path:
    manifest.root.mkdir(parents=True, exist_ok=True)
    lines = [f"{a}\t{b}" for a, b in manifest.pairs]
    manifest.path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return manifest.path


def write_samples(samples: Iterable[Sample], root: Path, split: str) -> DatasetManifest:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    split_root = Path(root) / split
    manifest = DatasetManifest(root=split_root, split=split)
    for i, sample in enumerate(samples):
        name = sample.name or f"{split}_{i:05d}"
        write_image(split_root / "images" / f"{name}.png", sample.image)
        write_mask(split_root / "masks" / f"{name}.png", sample.area)
        write_mask(split_root / "edges" / f"{name}.png", sample.edge)
        manifest.pairs.append((f"images/{name}.png", f"masks/{name}.png"))
    write_manifest(manifest)
    logger.info("wrote %d samples to %s", len(manifest.pairs), split_root)
    return manifest


def load_samples(manifest: DatasetManifest, edge_width: int = DEFAULT_EDGE_WIDTH) -> List[Sample]:
    """Edge labels come from edges/<name>.png when present, otherwise derived from the mask."""
    ok, problems = manifest.validate()
    if not ok:
        raise FileNotFoundError("; ".join(problems[:5]))
    samples: List[Sample] = []
    for image_rel, mask_rel in manifest.pairs:
        image = read_image(manifest.resolve(image_rel))
        area = read_mask(manifest.resolve(mask_rel))
        stem = Path(image_rel).stem
        edge_path = manifest.root / "edges" / f"{stem}.png"
        edge = read_mask(edge_path) if edge_path.exists() else derive_edge_mask(area, edge_width)
        samples.append(Sample(image=image, area=area, edge=edge, name=stem))
    return samples

"""
torch-facing view of the sample sets.

`load_split` resolves a RunConfig data source to a list of Samples: synthetic
sources are regenerated from their seed (train and test use independent
child seeds), manifest sources are read from <root>/<split>/.
"""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from app.core.config import DataSource, ManifestSource, SyntheticSource
from app.core.types import Sample
from app.data.manifest import SPLITS, load_manifest, load_samples
from app.data.synth import synth_generate

Batch = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """H x W x 3 -> 3 x H x W float32."""
    return torch.from_numpy(np.ascontiguousarray(np.asarray(image, dtype=np.float32).transpose(2, 0, 1)))


def mask_to_tensor(mask: np.ndarray) -> torch.Tensor:
    """H x W -> 1 x H x W float32 in {0, 1}."""
    return torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32))[None]


class RoadDataset(Dataset):
    def __init__(self, samples: Sequence[Sample]) -> None:
        self.samples = list(samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int) -> Batch:
        s = self.samples[idx]
        return image_to_tensor(s.image), mask_to_tensor(s.area), mask_to_tensor(s.edge)


def synthetic_split_seeds(seed: int) -> Tuple[int, int]:
    train, test = np.random.SeedSequence(seed).generate_state(2)
    return int(train), int(test)


def load_split(source: DataSource, split: str) -> List[Sample]:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    if isinstance(source, SyntheticSource):
        train_seed, test_seed = synthetic_split_seeds(source.seed)
        if split == "train":
            return synth_generate(source.n_train, source.size, train_seed)
        return synth_generate(source.n_test, source.size, test_seed)
    if isinstance(source, ManifestSource):
        split_root = source.root / split
        if not split_root.exists():
            raise FileNotFoundError(f"Missing dataset split: {split_root}")
        return load_samples(load_manifest(split_root), source.edge_width)
    raise TypeError(f"unsupported data source {type(source).__name__}")


def make_loader(
    samples: Sequence[Sample],
    batch_size: int,
    shuffle: bool,
    seed: int = 0,
    num_workers: int = 0,
    drop_last: bool = False,
) -> DataLoader:
    """Shuffling draws from a generator seeded with `seed`, so batch order is reproducible."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        RoadDataset(samples),
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
        drop_last=drop_last,
    )

from __future__ import annotations

import numpy as np
from scipy import ndimage

DEFAULT_EDGE_WIDTH = 2


def _footprint(k: int) -> tuple[int, int]:
    return (2 * k + 1, 2 * k + 1)


def dilate(mask: np.ndarray, k: int) -> np.ndarray:
    # mode="nearest" replicates the border
    return ndimage.grey_dilation(np.asarray(mask, dtype=np.uint8), size=_footprint(k), mode="nearest")


def erode(mask: np.ndarray, k: int) -> np.ndarray:
    return ndimage.grey_erosion(np.asarray(mask, dtype=np.uint8), size=_footprint(k), mode="nearest")


def derive_edge_mask(area: np.ndarray, k: int = DEFAULT_EDGE_WIDTH) -> np.ndarray:
    """Morphological gradient of a binary mask: dilation XOR erosion, (2k+1)-square element."""
    if k < 1:
        raise ValueError("edge width k must be >= 1")
    area = (np.asarray(area) > 0).astype(np.uint8)
    return (dilate(area, k) ^ erode(area, k)).astype(np.uint8)

"""
Feature bridge modules (FBM): one-way injection of side-branch (edge)
features into main-branch features at the same level.

    base_a  concat + 1x1 conv                      any position
    base_b  elementwise sum                        any position
    c       main * P(side), concat main, 1x1 conv  any position
    d       Q(side) mask over concat(main, skip)   decoder positions only
"""
from __future__ import annotations

from enum import Enum
from typing import Optional

import torch
from torch import nn

from app.core.errors import ConfigurationError
from app.core.types import FeatureMap
from app.nn.blocks import conv1x1
from app.nn.cgm import check_pair, p_map


class FbmVariant(str, Enum):
    BASE_CONCAT = "base_a"
    BASE_ADD = "base_b"
    MASK_BRIDGE = "c"
    DEEP_MASK_BRIDGE = "d"


def q_map(x: FeatureMap, rescale: bool = False) -> FeatureMap:
    """
    Spatial softmax of the channel mean of x**2, N x 1 x H x W; sums to 1 per
    image. With rescale=True the map is multiplied by H*W (mean 1).
    """
    n, _, h, w = x.shape
    energy = (x * x).mean(dim=1).reshape(n, h * w)
    q = torch.softmax(energy, dim=1).reshape(n, 1, h, w)
    if rescale:
        q = q * (h * w)
    return q


class ShallowBridge(nn.Module):
    """base_a / base_b / c. The side feature is read, never modified."""

    def __init__(self, channels: int, variant: FbmVariant | str) -> None:
        super().__init__()
        self.variant = FbmVariant(variant)
        if self.variant is FbmVariant.DEEP_MASK_BRIDGE:
            raise ConfigurationError("variant d is a deep bridge; use DeepBridge")
        self.channels = channels
        self.fuse = conv1x1(2 * channels, channels) if self.variant is not FbmVariant.BASE_ADD else None

    def forward(self, main: FeatureMap, side: FeatureMap) -> FeatureMap:
        check_pair(main, side, f"FBM({self.variant.value})")
        if self.variant is FbmVariant.BASE_ADD:
            return main + side
        if self.variant is FbmVariant.BASE_CONCAT:
            return self.fuse(torch.cat([main, side], dim=1))
        enhanced = main * p_map(side)
        return self.fuse(torch.cat([enhanced, main], dim=1))


class DeepBridge(nn.Module):
    """
    Class (d): concat the matching encoder skip into the decoder feature,
    filter with Q(side), concat with the original decoder feature.
    """

    def __init__(self, channels: int, skip_channels: int, rescale: bool = False) -> None:
        super().__init__()
        self.variant = FbmVariant.DEEP_MASK_BRIDGE
        self.channels = channels
        self.skip_channels = skip_channels
        self.rescale = rescale
        self.spatial = conv1x1(channels + skip_channels, channels)
        self.fuse = conv1x1(2 * channels, channels)

    def forward(self, d_main: FeatureMap, d_side: FeatureMap, e_skip: FeatureMap) -> FeatureMap:
        check_pair(d_main, d_side, "FBM(d)")
        if e_skip.dim() != 4 or e_skip.shape[0] != d_main.shape[0] or e_skip.shape[2:] != d_main.shape[2:]:
            raise ConfigurationError(
                f"FBM(d): skip {tuple(e_skip.shape)} does not match decoder {tuple(d_main.shape)}"
            )
        if e_skip.shape[1] != self.skip_channels:
            raise ConfigurationError(
                f"FBM(d): expected {self.skip_channels} skip channels, got {e_skip.shape[1]}"
            )
        tmp = self.spatial(torch.cat([d_main, e_skip], dim=1))
        enhanced = tmp * q_map(d_side, rescale=self.rescale)
        return self.fuse(torch.cat([enhanced, d_main], dim=1))


def build_bridge(
    variant: FbmVariant | str,
    channels: int,
    position: str,
    skip_channels: Optional[int] = None,
    rescale: bool = False,
) -> nn.Module:
    """position is "encoder" or "decoder"; class (d) is only legal at decoder positions."""
    variant = FbmVariant(variant)
    if variant is FbmVariant.DEEP_MASK_BRIDGE:
        if position != "decoder":
            raise ConfigurationError("FBM (d) is only legal at decoder fusion points")
        return DeepBridge(channels, skip_channels if skip_channels is not None else channels, rescale)
    return ShallowBridge(channels, variant)

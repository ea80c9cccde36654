"""
Cross-layer graph fusion (CGM).

A CGM sits on every skip connection of the main branch. It adds spatial
information to the decoder feature D^i (strategy A or B), reinforces the
semantics of the encoder feature E^i (strategy C or D), then fuses the two
enhanced streams with a 1x1 convolution back to C channels. The baseline
variant concatenates D^i and E^i and applies the 1x1 convolution directly.

    variant   decoder   encoder
    base      -         -
    a         A         C
    b         A         D
    c         B         C
    d         B         D
"""
from __future__ import annotations

from enum import Enum
from typing import Optional, Tuple

import torch
from torch import nn

from app.core.errors import ConfigurationError
from app.core.types import FeatureMap
from app.nn.blocks import conv1x1, conv3x3

P_EPS = 1e-6


class DecoderStrategy(str, Enum):
    A = "A"  # multiple convolutions over concat(E, D)
    B = "B"  # encoder features under the non-salient map of D


class EncoderStrategy(str, Enum):
    C = "C"  # E * D channel by channel
    D = "D"  # E * P(D)


class CgmVariant(str, Enum):
    BASE = "base"
    A = "a"
    B = "b"
    C = "c"
    D = "d"

    @property
    def strategies(self) -> Tuple[Optional[DecoderStrategy], Optional[EncoderStrategy]]:
        return _STRATEGIES[self]

    @property
    def decoder_strategy(self) -> Optional[DecoderStrategy]:
        return self.strategies[0]

    @property
    def encoder_strategy(self) -> Optional[EncoderStrategy]:
        return self.strategies[1]

    @classmethod
    def from_strategies(
        cls,
        decoder: Optional[DecoderStrategy | str],
        encoder: Optional[EncoderStrategy | str],
    ) -> "CgmVariant":
        dec = DecoderStrategy(decoder) if decoder is not None else None
        enc = EncoderStrategy(encoder) if encoder is not None else None
        for variant, pair in _STRATEGIES.items():
            if pair == (dec, enc):
                return variant
        raise ConfigurationError(f"illegal CGM strategy pair ({decoder}, {encoder})")


_STRATEGIES = {
    CgmVariant.BASE: (None, None),
    CgmVariant.A: (DecoderStrategy.A, EncoderStrategy.C),
    CgmVariant.B: (DecoderStrategy.A, EncoderStrategy.D),
    CgmVariant.C: (DecoderStrategy.B, EncoderStrategy.C),
    CgmVariant.D: (DecoderStrategy.B, EncoderStrategy.D),
}


def p_map(x: FeatureMap, eps: float = P_EPS) -> FeatureMap:
    """
    Channel-mean map normalized by its spatial maximum, N x 1 x H x W.

    The ratio d / max(d) is formed first and then divided by (1 + eps); eps
    is not added to the maximum as in the usual d / (max(d) + eps) form. A
    positive rescaling of x therefore cancels inside the ratio at any scale,
    and a map with a tiny positive maximum still peaks at 1 / (1 + eps)
    instead of collapsing towards 0. Maps whose maximum is <= 0 are all zero.
    """
    d = x.mean(dim=1, keepdim=True)
    peak = d.amax(dim=(2, 3), keepdim=True)
    positive = peak > 0
    ratio = d / torch.where(positive, peak, torch.ones_like(peak))
    return torch.where(positive, ratio, torch.zeros_like(d)) / (1.0 + eps)


def check_pair(e: FeatureMap, d: FeatureMap, where: str) -> None:
    if e.dim() != 4 or d.dim() != 4:
        raise ConfigurationError(f"{where}: expected N x C x H x W inputs")
    if e.shape != d.shape:
        raise ConfigurationError(
            f"{where}: encoder {tuple(e.shape)} and decoder {tuple(d.shape)} features differ"
        )


class SpatialConvs(nn.Module):
    """Strategy A: conv3x3 -> relu -> conv3x3 over concat(E, D), C outputs."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.conv1 = conv3x3(2 * channels, channels)
        self.relu = nn.ReLU()
        self.conv2 = conv3x3(channels, channels)

    def forward(self, e: FeatureMap, d: FeatureMap) -> FeatureMap:
        return self.conv2(self.relu(self.conv1(torch.cat([e, d], dim=1))))


def enhance_decoder(
    e: FeatureMap,
    d: FeatureMap,
    strategy: DecoderStrategy,
    spatial: Optional[SpatialConvs] = None,
) -> FeatureMap:
    check_pair(e, d, "enhance_decoder")
    strategy = DecoderStrategy(strategy)
    if strategy is DecoderStrategy.A:
        if spatial is None:
            raise ConfigurationError("strategy A needs its convolution weights")
        return d + spatial(e, d)
    non_salient = 1.0 - p_map(d)
    return d + e * non_salient


def enhance_encoder(e: FeatureMap, d: FeatureMap, strategy: EncoderStrategy) -> FeatureMap:
    check_pair(e, d, "enhance_encoder")
    strategy = EncoderStrategy(strategy)
    if strategy is EncoderStrategy.C:
        return e * d
    return e * p_map(d)


class DecoderEnhance(nn.Module):
    def __init__(self, channels: int, strategy: DecoderStrategy) -> None:
        super().__init__()
        self.strategy = DecoderStrategy(strategy)
        self.spatial = SpatialConvs(channels) if self.strategy is DecoderStrategy.A else None

    def forward(self, e: FeatureMap, d: FeatureMap) -> FeatureMap:
        return enhance_decoder(e, d, self.strategy, self.spatial)


class EncoderEnhance(nn.Module):
    def __init__(self, strategy: EncoderStrategy) -> None:
        super().__init__()
        self.strategy = EncoderStrategy(strategy)

    def forward(self, e: FeatureMap, d: FeatureMap) -> FeatureMap:
        return enhance_encoder(e, d, self.strategy)


class CGM(nn.Module):
    """
    Fuse a same-size (E^i, D^i) pair into C channels.

    skip_tap / decoder_tap are identity taps so forward hooks can observe the
    raw inputs (heat-map export).
    """

    def __init__(self, channels: int, variant: CgmVariant | str = CgmVariant.BASE) -> None:
        super().__init__()
        self.channels = channels
        self.variant = CgmVariant(variant)
        self.skip_tap = nn.Identity()
        self.decoder_tap = nn.Identity()
        dec, enc = self.variant.strategies
        if dec is not None:
            self.decoder_enhance = DecoderEnhance(channels, dec)
            self.encoder_enhance = EncoderEnhance(enc)
        self.fuse = conv1x1(2 * channels, channels)

    def forward(self, e: FeatureMap, d: FeatureMap) -> FeatureMap:
        check_pair(e, d, f"CGM({self.variant.value})")
        e = self.skip_tap(e)
        d = self.decoder_tap(d)
        if self.variant is CgmVariant.BASE:
            return self.fuse(torch.cat([d, e], dim=1))
        d_plus = self.decoder_enhance(e, d)
        e_plus = self.encoder_enhance(e, d)
        return self.fuse(torch.cat([d_plus, e_plus], dim=1))

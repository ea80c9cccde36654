"""
Dual-task network assembly.

Main branch: full-resolution stem (3 -> C0) and four down blocks
(C0 -> 2C0 -> 4C0 -> 8C0 -> 16C0) form E. D repeats four times
[up block halving channels -> CGM with the same-resolution E feature ->
residual block], then a 1x1 conv + sigmoid head at full resolution.

Side branch (optional): E1 with the same widths, D1 of four up blocks with no
skips, own 1x1 conv + sigmoid head. Bridges inject E1/D1 features into E/D at
the levels selected by the placement.
"""
from __future__ import annotations

from typing import Dict, List, Optional

import torch
from torch import nn

from app.core.config import NetworkConfig
from app.core.config_validate import validate_input_size, validate_network_config
from app.core.errors import ConfigurationError, ShapeError
from app.core.log import get_logger
from app.core.types import FeatureMap, Prediction
from app.nn.blocks import BlockSpec, DownBlock, ResidualBlock, UpBlock, conv1x1, init_weights
from app.nn.cgm import CGM, CgmVariant
from app.nn.fbm import DeepBridge, build_bridge

logger = get_logger(__name__)


def _level_key(level: int) -> str:
    return f"level{level}"


class Encoder(nn.Module):
    """Stem plus four down blocks; returns [stem, level1, .., level4]."""

    def __init__(self, widths: List[int], normalization: bool) -> None:
        super().__init__()
        self.stem = ResidualBlock(BlockSpec(3, widths[0], normalization))
        self.downs = nn.ModuleList(
            DownBlock(BlockSpec(widths[k], widths[k + 1], normalization))
            for k in range(len(widths) - 1)
        )

    def forward(
        self,
        image: torch.Tensor,
        side: Optional[List[FeatureMap]] = None,
        bridges: Optional[nn.ModuleDict] = None,
    ) -> List[FeatureMap]:
        feats: List[FeatureMap] = [self.stem(image)]
        for level, down in enumerate(self.downs, start=1):
            feat = down(feats[-1])
            key = _level_key(level)
            if side is not None and bridges is not None and key in bridges:
                feat = bridges[key](feat, side[level])
            feats.append(feat)
        return feats


class DecoderLevel(nn.Module):
    """up block -> CGM(skip, up) -> residual block."""

    def __init__(self, in_channels: int, out_channels: int, variant: CgmVariant, normalization: bool) -> None:
        super().__init__()
        self.up = UpBlock(BlockSpec(in_channels, out_channels, normalization))
        self.cgm = CGM(out_channels, variant)
        self.refine = ResidualBlock(BlockSpec(out_channels, out_channels, normalization))

    def forward(self, x: FeatureMap, skip: FeatureMap) -> FeatureMap:
        return self.refine(self.cgm(skip, self.up(x)))


class MainDecoder(nn.Module):
    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        w = config.widths
        self.levels = nn.ModuleList(
            DecoderLevel(w[5 - level], w[4 - level], config.cgm_variant_at(level), config.normalization)
            for level in (1, 2, 3, 4)
        )

    def forward(
        self,
        enc: List[FeatureMap],
        side: Optional[List[FeatureMap]] = None,
        bridges: Optional[nn.ModuleDict] = None,
    ) -> FeatureMap:
        """enc is the encoder output list; side holds the side decoder output per level (deepest first)."""
        d = enc[-1]
        for level, stage in enumerate(self.levels, start=1):
            skip = enc[4 - level]
            d = stage(d, skip)
            key = _level_key(level)
            if side is not None and bridges is not None and key in bridges:
                bridge = bridges[key]
                sd = side[level - 1]
                d = bridge(d, sd, skip) if isinstance(bridge, DeepBridge) else bridge(d, sd)
        return d


class SideDecoder(nn.Module):
    """Four up blocks without skips; returns the output of every level, deepest first."""

    def __init__(self, widths: List[int], normalization: bool) -> None:
        super().__init__()
        self.ups = nn.ModuleList(
            UpBlock(BlockSpec(widths[5 - level], widths[4 - level], normalization))
            for level in (1, 2, 3, 4)
        )

    def forward(self, x: FeatureMap) -> List[FeatureMap]:
        outs: List[FeatureMap] = []
        for up in self.ups:
            x = up(x)
            outs.append(x)
        return outs


class DTNet(nn.Module):
    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        ok, messages = validate_network_config(config)
        if not ok:
            raise ConfigurationError("; ".join(messages))
        for msg in messages:
            logger.debug("network config: %s", msg)

        self.config = config
        w = config.widths
        norm = config.normalization

        self.encoder = Encoder(w, norm)
        self.decoder = MainDecoder(config)
        self.head = conv1x1(w[0], 1)

        self.side_encoder: Optional[Encoder] = None
        self.side_decoder: Optional[SideDecoder] = None
        self.side_head: Optional[nn.Conv2d] = None
        self.encoder_bridges = nn.ModuleDict()
        self.decoder_bridges = nn.ModuleDict()

        if config.side_branch:
            self.side_encoder = Encoder(w, norm)
            self.side_decoder = SideDecoder(w, norm)
            self.side_head = conv1x1(w[0], 1)
            for level in config.placement.encoder_levels:
                self.encoder_bridges[_level_key(level)] = build_bridge(
                    config.fbm_encoder_variant, w[level], "encoder"
                )
            for level in config.placement.decoder_levels:
                self.decoder_bridges[_level_key(level)] = build_bridge(
                    config.fbm_decoder_variant, w[4 - level], "decoder",
                    skip_channels=w[4 - level], rescale=config.q_rescale,
                )

    @property
    def dual_task(self) -> bool:
        return self.side_encoder is not None

    def _check_input(self, image: torch.Tensor) -> None:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected N x 3 x H x W image batch, got {tuple(image.shape)}")
        ok, problems = validate_input_size(int(image.shape[2]), int(image.shape[3]))
        if not ok:
            raise ShapeError("; ".join(problems))
        if not torch.isfinite(image).all():
            raise ShapeError("image contains non-finite values")

    def forward(self, image: torch.Tensor) -> Prediction:
        self._check_input(image)

        if not self.dual_task:
            enc = self.encoder(image)
            road = torch.sigmoid(self.head(self.decoder(enc)))
            return Prediction(road_prob=road, edge_prob=None)

        side = self.side_encoder(image)
        enc = self.encoder(image, side, self.encoder_bridges)
        side_levels = self.side_decoder(side[-1])
        d = self.decoder(enc, side_levels, self.decoder_bridges)

        road = torch.sigmoid(self.head(d))
        edge = torch.sigmoid(self.side_head(side_levels[-1]))
        return Prediction(road_prob=road, edge_prob=edge)


def build(config: NetworkConfig) -> DTNet:
    """Construct a network with weights drawn from config.seed; global RNG state is untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        net = DTNet(config)
        net.apply(init_weights)
    logger.info(
        "built DTNet cgm=%s placement=%s side_branch=%s params=%d",
        config.cgm_variant.value, config.placement.value, config.side_branch, count_parameters(net),
    )
    return net


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def layer_names(net: nn.Module) -> Dict[str, nn.Module]:
    return {name: module for name, module in net.named_modules() if name}

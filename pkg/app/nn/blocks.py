"""
Residual building blocks shared by both branches.

All three blocks follow the same pattern: a two-convolution main path, a
shortcut, their sum and a final rectifier. Normalization can be switched off
(gradient-check mode) through BlockSpec.normalization.
"""
from __future__ import annotations

from dataclasses import dataclass

from torch import nn
from torch.nn import functional as F

from app.core.errors import ConfigurationError, DegenerateInputError
from app.core.types import FeatureMap


@dataclass(frozen=True)
class BlockSpec:
    in_channels: int
    out_channels: int
    normalization: bool = True

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(
                f"channel counts must be >= 1, got {self.in_channels}->{self.out_channels}"
            )


def norm_layer(channels: int, enabled: bool) -> nn.Module:
    return nn.BatchNorm2d(channels) if enabled else nn.Identity()


def conv3x3(in_channels: int, out_channels: int, stride: int = 1) -> nn.Conv2d:
    # "same" zero padding
    return nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1)


def conv1x1(in_channels: int, out_channels: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, kernel_size=1, stride=stride)


def check_channels(x: FeatureMap, expected: int, where: str) -> None:
    if x.dim() != 4:
        raise ConfigurationError(f"{where}: expected N x C x H x W, got shape {tuple(x.shape)}")
    if x.shape[1] != expected:
        raise ConfigurationError(f"{where}: expected {expected} channels, got {x.shape[1]}")


class ResidualBlock(nn.Module):
    """conv3x3-norm-relu-conv3x3-norm + shortcut, then relu. Stride applies to the
    first main-path convolution and to the projected shortcut."""

    def __init__(self, spec: BlockSpec, stride: int = 1) -> None:
        super().__init__()
        self.spec = spec
        self.stride = stride
        self.conv1 = conv3x3(spec.in_channels, spec.out_channels, stride=stride)
        self.norm1 = norm_layer(spec.out_channels, spec.normalization)
        self.relu1 = nn.ReLU()
        self.conv2 = conv3x3(spec.out_channels, spec.out_channels)
        self.norm2 = norm_layer(spec.out_channels, spec.normalization)
        if stride == 1 and spec.in_channels == spec.out_channels:
            self.shortcut: nn.Module = nn.Identity()
        else:
            self.shortcut = nn.Sequential(
                conv1x1(spec.in_channels, spec.out_channels, stride=stride),
                norm_layer(spec.out_channels, spec.normalization),
            )
        self.relu_out = nn.ReLU()

    def forward(self, x: FeatureMap) -> FeatureMap:
        check_channels(x, self.spec.in_channels, type(self).__name__)
        out = self.relu1(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.relu_out(out + self.shortcut(x))


class DownBlock(ResidualBlock):
    """Stride-2 residual block: H x W -> ceil(H/2) x ceil(W/2)."""

    def __init__(self, spec: BlockSpec) -> None:
        super().__init__(spec, stride=2)

    def forward(self, x: FeatureMap) -> FeatureMap:
        if x.dim() == 4 and (x.shape[2] < 2 or x.shape[3] < 2):
            raise DegenerateInputError(
                f"DownBlock needs spatial size >= 2, got {tuple(x.shape[2:])}"
            )
        return super().forward(x)


def upsample2x(x: FeatureMap) -> FeatureMap:
    # half-pixel centres; constants stay constant
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class UpBlock(nn.Module):
    """2x bilinear upsample on both paths, then the residual pattern."""

    def __init__(self, spec: BlockSpec) -> None:
        super().__init__()
        self.spec = spec
        self.conv1 = conv3x3(spec.in_channels, spec.out_channels)
        self.norm1 = norm_layer(spec.out_channels, spec.normalization)
        self.relu1 = nn.ReLU()
        self.conv2 = conv3x3(spec.out_channels, spec.out_channels)
        self.norm2 = norm_layer(spec.out_channels, spec.normalization)
        self.shortcut = nn.Sequential(
            conv1x1(spec.in_channels, spec.out_channels),
            norm_layer(spec.out_channels, spec.normalization),
        )
        self.relu_out = nn.ReLU()

    def forward(self, x: FeatureMap) -> FeatureMap:
        check_channels(x, self.spec.in_channels, "UpBlock")
        up = upsample2x(x)
        out = self.relu1(self.norm1(self.conv1(up)))
        out = self.norm2(self.conv2(out))
        return self.relu_out(out + self.shortcut(up))


def init_weights(module: nn.Module) -> None:
    """Fan-in scaled normal init for convolutions; unit/zero for norms."""
    if isinstance(module, nn.Conv2d):
        nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)

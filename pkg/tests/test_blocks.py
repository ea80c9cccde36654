from __future__ import annotations

import pytest
import torch

from app.core.errors import ConfigurationError, DegenerateInputError
from app.nn.blocks import BlockSpec, DownBlock, ResidualBlock, UpBlock, init_weights, upsample2x


def _block(cls, c_in, c_out, norm=False):
    torch.manual_seed(0)
    block = cls(BlockSpec(c_in, c_out, normalization=norm))
    block.apply(init_weights)
    return block.double()


def test_residual_block_preserves_spatial_size():
    block = _block(ResidualBlock, 3, 5)
    out = block(torch.randn(2, 3, 7, 9, dtype=torch.float64))
    assert out.shape == (2, 5, 7, 9)
    assert (out >= 0).all()


def test_identity_shortcut_when_channels_match():
    block = _block(ResidualBlock, 4, 4)
    assert isinstance(block.shortcut, torch.nn.Identity)


@pytest.mark.parametrize("h,w,expected", [(8, 8, (4, 4)), (7, 5, (4, 3)), (2, 2, (1, 1))])
def test_down_block_halves_with_ceiling(h, w, expected):
    block = _block(DownBlock, 2, 4)
    out = block(torch.randn(1, 2, h, w, dtype=torch.float64))
    assert out.shape == (1, 4, *expected)


def test_down_block_rejects_unit_spatial_size():
    block = _block(DownBlock, 2, 4)
    with pytest.raises(DegenerateInputError):
        block(torch.randn(1, 2, 1, 4, dtype=torch.float64))


def test_up_block_doubles_spatial_size():
    block = _block(UpBlock, 4, 2)
    out = block(torch.randn(3, 4, 5, 6, dtype=torch.float64))
    assert out.shape == (3, 2, 10, 12)


@pytest.mark.parametrize("cls", [ResidualBlock, DownBlock, UpBlock])
def test_channel_mismatch_is_a_configuration_error(cls):
    block = _block(cls, 3, 4)
    with pytest.raises(ConfigurationError):
        block(torch.randn(1, 2, 8, 8, dtype=torch.float64))


def test_zero_channel_spec_rejected():
    with pytest.raises(ConfigurationError):
        BlockSpec(0, 4)


def test_upsample_keeps_constants_constant():
    x = torch.full((1, 2, 3, 5), 0.7, dtype=torch.float64)
    up = upsample2x(x)
    assert up.shape == (1, 2, 6, 10)
    assert torch.allclose(up, torch.full_like(up, 0.7), atol=1e-15, rtol=0)


def test_blocks_are_deterministic_in_eval_mode():
    block = _block(ResidualBlock, 3, 3, norm=True).eval()
    x = torch.randn(2, 3, 6, 6, dtype=torch.float64)
    assert torch.equal(block(x), block(x))

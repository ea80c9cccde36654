from __future__ import annotations

import pytest
import torch
from torch.nn import functional as F

from app.core.errors import ConfigurationError
from app.nn.blocks import init_weights
from app.nn.cgm import (
    CGM,
    CgmVariant,
    DecoderStrategy,
    EncoderStrategy,
    enhance_decoder,
    enhance_encoder,
    p_map,
)

EPS = 1e-6


def _dyadic(g, *shape, low=1, high=257):
    # multiples of 1/256: sums and small-integer rescalings stay exact in float64
    return torch.randint(low, high, shape, generator=g).to(torch.float64) / 256.0


def test_p_map_hand_case():
    x = torch.tensor([[[[1.0, 3.0], [2.0, 4.0]]]], dtype=torch.float64)
    expected = torch.tensor([[[[0.25, 0.75], [0.5, 1.0]]]], dtype=torch.float64)
    assert torch.allclose(p_map(x), expected, atol=2 * EPS, rtol=0)


def test_p_map_constant_and_zero():
    c = torch.full((1, 3, 4, 5), 2.5, dtype=torch.float64)
    assert torch.allclose(p_map(c), torch.full((1, 1, 4, 5), 1.0, dtype=torch.float64), atol=2 * EPS)
    z = torch.zeros(2, 3, 4, 4, dtype=torch.float64)
    assert torch.equal(p_map(z), torch.zeros(2, 1, 4, 4, dtype=torch.float64))


def test_p_map_nonpositive_maximum_gives_zero_map():
    x = -torch.rand(1, 2, 3, 3, dtype=torch.float64) - 0.1
    assert torch.equal(p_map(x), torch.zeros(1, 1, 3, 3, dtype=torch.float64))


def test_p_map_invariants_over_random_maps(rng):
    x = _dyadic(rng, 1000, 4, 5, 6)
    p = p_map(x)
    assert p.shape == (1000, 1, 5, 6)
    assert (p >= 0).all() and (p <= 1).all()
    peaks = p.amax(dim=(2, 3))
    assert torch.all((peaks - 1.0).abs() <= 2e-6)
    for alpha in (0.5, 3.0):
        assert torch.equal(p_map(alpha * x), p)


def test_p_map_is_spatially_equivariant(rng):
    x = _dyadic(rng, 2, 3, 4, 4)
    perm = torch.randperm(16, generator=rng)
    permuted = x.reshape(2, 3, 16)[:, :, perm].reshape(2, 3, 4, 4)
    expected = p_map(x).reshape(2, 1, 16)[:, :, perm].reshape(2, 1, 4, 4)
    assert torch.equal(p_map(permuted), expected)


def test_p_map_scale_invariance_for_arbitrary_factors(rng):
    x = torch.rand(50, 4, 5, 6, generator=rng, dtype=torch.float64) + 0.01
    p = p_map(x)
    for alpha in (1e-9, 0.37, 7.3, 1e6):
        assert torch.allclose(p_map(alpha * x), p, rtol=1e-12, atol=1e-15)


def test_p_map_tiny_maximum_still_peaks_near_one():
    x = torch.tensor([[[[1e-6, 5e-7], [2.5e-7, 0.0]]]], dtype=torch.float64)
    p = p_map(x)
    assert p[0, 0, 0, 0].item() == pytest.approx(1.0 / (1.0 + EPS), abs=1e-15)
    assert p[0, 0, 0, 1].item() == pytest.approx(0.5 / (1.0 + EPS), abs=1e-15)
    # the stabilizer divides the ratio; added to the maximum this would be about 0.5
    assert p.amax().item() > 0.99


def test_strategy_b_saturated_and_zero_decoder(rng):
    e = torch.randn(1, 3, 4, 4, generator=rng, dtype=torch.float64)
    d = torch.full((1, 3, 4, 4), 0.8, dtype=torch.float64)
    assert torch.allclose(enhance_decoder(e, d, DecoderStrategy.B), d, atol=1e-5)
    zero = torch.zeros_like(d)
    assert torch.equal(enhance_decoder(e, zero, DecoderStrategy.B), e)


def test_strategy_a_needs_weights(rng):
    e = torch.randn(1, 2, 4, 4, generator=rng)
    with pytest.raises(ConfigurationError):
        enhance_decoder(e, e, DecoderStrategy.A)


def test_strategy_c_identity_and_symmetry(rng):
    e = torch.randn(2, 3, 4, 4, generator=rng, dtype=torch.float64)
    d = torch.randn(2, 3, 4, 4, generator=rng, dtype=torch.float64)
    assert torch.equal(enhance_encoder(e, torch.ones_like(e), EncoderStrategy.C), e)
    assert torch.equal(enhance_encoder(e, d, EncoderStrategy.C), enhance_encoder(d, e, EncoderStrategy.C))


def test_strategy_d_hand_case():
    e = torch.ones(1, 2, 2, 2, dtype=torch.float64)
    d = torch.tensor([[[[1.0, 3.0], [2.0, 4.0]]]], dtype=torch.float64).expand(1, 2, 2, 2)
    expected = torch.tensor([[0.25, 0.75], [0.5, 1.0]], dtype=torch.float64).expand(1, 2, 2, 2)
    assert torch.allclose(enhance_encoder(e, d, EncoderStrategy.D), expected, atol=2 * EPS, rtol=0)


def test_strategy_d_constant_decoder_keeps_encoder(rng):
    e = torch.randn(1, 3, 4, 4, generator=rng, dtype=torch.float64)
    d = torch.full_like(e, 1.7)
    assert torch.allclose(enhance_encoder(e, d, EncoderStrategy.D), e, atol=1e-5)


def test_enhancements_reject_mismatched_pairs(rng):
    e = torch.randn(1, 3, 4, 4, generator=rng)
    d = torch.randn(1, 2, 4, 4, generator=rng)
    with pytest.raises(ConfigurationError):
        enhance_encoder(e, d, EncoderStrategy.C)
    with pytest.raises(ConfigurationError):
        enhance_decoder(e, d, DecoderStrategy.B)


@pytest.mark.parametrize("variant", list(CgmVariant))
def test_cgm_preserves_shape(variant, rng):
    cgm = CGM(4, variant)
    e = torch.randn(2, 4, 16, 16, generator=rng)
    d = torch.randn(2, 4, 16, 16, generator=rng)
    assert cgm(e, d).shape == (2, 4, 16, 16)


@pytest.mark.parametrize(
    "pair,variant",
    [(("A", "C"), "a"), (("A", "D"), "b"), (("B", "C"), "c"), (("B", "D"), "d"), ((None, None), "base")],
)
def test_variant_strategy_table(pair, variant):
    assert CgmVariant.from_strategies(*pair) is CgmVariant(variant)
    assert CgmVariant(variant).strategies == tuple(
        None if s is None else cls(s) for s, cls in zip(pair, (DecoderStrategy, EncoderStrategy))
    )


@pytest.mark.parametrize("pair", [("A", None), (None, "D")])
def test_illegal_strategy_pair(pair):
    with pytest.raises(ConfigurationError):
        CgmVariant.from_strategies(*pair)


def test_cgm_a_matches_straight_line_recomposition(rng):
    torch.manual_seed(0)
    cgm = CGM(2, CgmVariant.A)
    cgm.apply(init_weights)
    cgm = cgm.double()
    for conv in (cgm.decoder_enhance.spatial.conv1, cgm.decoder_enhance.spatial.conv2, cgm.fuse):
        torch.nn.init.normal_(conv.bias)
    e = torch.randn(1, 2, 4, 4, generator=rng, dtype=torch.float64)
    d = torch.randn(1, 2, 4, 4, generator=rng, dtype=torch.float64)

    s1, s2 = cgm.decoder_enhance.spatial.conv1, cgm.decoder_enhance.spatial.conv2
    spatial = F.conv2d(F.relu(F.conv2d(torch.cat([e, d], 1), s1.weight, s1.bias, padding=1)), s2.weight, s2.bias, padding=1)
    d_plus = d + spatial
    e_plus = e * d
    expected = F.conv2d(torch.cat([d_plus, e_plus], 1), cgm.fuse.weight, cgm.fuse.bias)

    assert torch.allclose(cgm(e, d), expected, atol=1e-12, rtol=0)


def test_cgm_base_concatenates_decoder_first(rng):
    cgm = CGM(2, CgmVariant.BASE).double()
    e = torch.randn(1, 2, 3, 3, generator=rng, dtype=torch.float64)
    d = torch.randn(1, 2, 3, 3, generator=rng, dtype=torch.float64)
    expected = F.conv2d(torch.cat([d, e], 1), cgm.fuse.weight, cgm.fuse.bias)
    assert torch.allclose(cgm(e, d), expected, atol=1e-12, rtol=0)
    assert not hasattr(cgm, "decoder_enhance")

from __future__ import annotations

import itertools

import pytest
import torch

from app.core.config import NetworkConfig, Placement, attach_side_branch, detach_side_branch
from app.core.errors import ConfigurationError, ShapeError
from app.nn.cgm import CgmVariant
from app.nn.fbm import FbmVariant
from app.nn.network import DTNet, build, count_parameters, layer_names
from app.train.gradcheck import compare_gradients
from app.train.losses import hybrid_loss


def _sweep():
    for cgm in CgmVariant:
        yield NetworkConfig(base_width=2, cgm_variant=cgm)
        for enc, dec, placement in itertools.product(
            [FbmVariant.BASE_CONCAT, FbmVariant.BASE_ADD, FbmVariant.MASK_BRIDGE],
            list(FbmVariant),
            [Placement.I, Placement.II, Placement.III, Placement.IV],
        ):
            yield NetworkConfig(
                base_width=2, cgm_variant=cgm, side_branch=True,
                fbm_encoder_variant=enc, fbm_decoder_variant=dec, placement=placement,
            )


def test_forward_shape_and_range_sweep():
    image = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(0))
    n = 0
    for cfg in _sweep():
        net = build(cfg).eval()
        with torch.no_grad():
            pred = net(image)
        assert pred.road_prob.shape == (1, 1, 32, 32), cfg
        assert ((pred.road_prob >= 0) & (pred.road_prob <= 1)).all(), cfg
        if cfg.side_branch:
            assert pred.edge_prob.shape == (1, 1, 32, 32), cfg
            assert ((pred.edge_prob >= 0) & (pred.edge_prob <= 1)).all(), cfg
        else:
            assert pred.edge_prob is None
        n += 1
    assert n == 5 * (1 + 3 * 4 * 4)


def test_bridges_follow_placement():
    for placement, enc, dec in [
        (Placement.I, {1, 2, 3, 4}, {1, 2, 3, 4}),
        (Placement.II, {1, 2, 3, 4}, set()),
        (Placement.III, set(), {1, 2, 3, 4}),
        (Placement.IV, {4}, {1}),
    ]:
        net = DTNet(NetworkConfig.dtnet(base_width=2, placement=placement))
        assert set(net.encoder_bridges) == {f"level{k}" for k in enc}
        assert set(net.decoder_bridges) == {f"level{k}" for k in dec}


def test_baseline_and_final_presets():
    baseline = NetworkConfig.baseline()
    assert baseline.cgm_variant is CgmVariant.BASE
    assert not baseline.side_branch and baseline.placement is Placement.NONE
    final = NetworkConfig.dtnet()
    assert final.cgm_variant is CgmVariant.A
    assert final.fbm_encoder_variant is FbmVariant.MASK_BRIDGE
    assert final.fbm_decoder_variant is FbmVariant.DEEP_MASK_BRIDGE
    assert final.placement is Placement.I and final.side_branch


def test_full_size_tile_forward():
    net = build(NetworkConfig.dtnet(base_width=2)).eval()
    with torch.no_grad():
        pred = net(torch.rand(1, 3, 256, 256))
    assert pred.road_prob.shape == (1, 1, 256, 256)
    assert pred.edge_prob.shape == (1, 1, 256, 256)


def test_same_seed_same_parameters():
    a = build(NetworkConfig.dtnet(base_width=4, seed=11)).state_dict()
    b = build(NetworkConfig.dtnet(base_width=4, seed=11)).state_dict()
    c = build(NetworkConfig.dtnet(base_width=4, seed=12)).state_dict()
    assert a.keys() == b.keys()
    assert all(torch.equal(a[k], b[k]) for k in a)
    assert any(not torch.equal(a[k], c[k]) for k in a if a[k].is_floating_point())


def test_build_leaves_global_rng_alone():
    torch.manual_seed(3)
    expected = torch.rand(4)
    torch.manual_seed(3)
    build(NetworkConfig(base_width=2))
    assert torch.equal(torch.rand(4), expected)


def test_eval_forward_is_deterministic(tiny_dtnet):
    net = build(tiny_dtnet).eval()
    x = torch.rand(2, 3, 32, 32)
    with torch.no_grad():
        first, second = net(x), net(x)
    assert torch.equal(first.road_prob, second.road_prob)
    assert torch.equal(first.edge_prob, second.edge_prob)


@pytest.mark.parametrize("shape", [(1, 3, 24, 32), (1, 3, 8, 8), (1, 1, 32, 32), (3, 32, 32)])
def test_bad_input_shapes(shape, tiny_baseline):
    net = build(tiny_baseline)
    with pytest.raises(ShapeError):
        net(torch.rand(*shape))


def test_non_finite_input_rejected(tiny_baseline):
    x = torch.rand(1, 3, 16, 16)
    x[0, 0, 0, 0] = float("nan")
    with pytest.raises(ShapeError):
        build(tiny_baseline)(x)


def test_illegal_configs_rejected():
    with pytest.raises(ConfigurationError):
        DTNet(NetworkConfig(side_branch=True, placement=Placement.I, fbm_encoder_variant=FbmVariant.DEEP_MASK_BRIDGE))
    with pytest.raises(ConfigurationError):
        DTNet(NetworkConfig(placement=Placement.II))


def test_attach_side_branch_round_trip_and_growth():
    base = NetworkConfig.baseline(base_width=2)
    attached = attach_side_branch(base)
    assert attached.side_branch and attached.placement is Placement.I
    assert attached.fbm_encoder_variant is FbmVariant.MASK_BRIDGE
    assert attached.fbm_decoder_variant is FbmVariant.DEEP_MASK_BRIDGE
    assert detach_side_branch(attached) == base
    assert count_parameters(DTNet(attached)) > count_parameters(DTNet(base))
    with pytest.raises(ConfigurationError):
        attach_side_branch(attached)


def test_heatmap_taps_are_named(tiny_dtnet):
    names = layer_names(DTNet(tiny_dtnet))
    for k in range(4):
        assert f"decoder.levels.{k}.cgm.skip_tap" in names
        assert f"decoder.levels.{k}.cgm.decoder_tap" in names


def _centre_taps_only(net: torch.nn.Module) -> None:
    with torch.no_grad():
        for m in net.modules():
            if isinstance(m, torch.nn.Conv2d) and m.kernel_size == (3, 3):
                centre = m.weight[:, :, 1, 1].clone()
                m.weight.zero_()
                m.weight[:, :, 1, 1] = centre


@pytest.mark.parametrize("dims", [(3,), (2,), (2, 3)])
def test_flip_equivariance_with_symmetric_kernels(dims):
    g = torch.Generator().manual_seed(4)
    net = build(NetworkConfig.dtnet(base_width=2, seed=4))
    _centre_taps_only(net)
    net.eval()
    # constant on 16x16 blocks, so stride-2 sampling commutes with the flip
    coarse = torch.rand(1, 3, 2, 2, generator=g)
    x = coarse.repeat_interleave(16, dim=2).repeat_interleave(16, dim=3)
    with torch.no_grad():
        pred = net(x)
        flipped = net(torch.flip(x, dims))
    assert torch.allclose(flipped.road_prob, torch.flip(pred.road_prob, dims), atol=1e-6)
    assert torch.allclose(flipped.edge_prob, torch.flip(pred.edge_prob, dims), atol=1e-6)


def test_end_to_end_gradient_matches_finite_differences():
    cfg = NetworkConfig.dtnet(base_width=2, normalization=False, seed=2)
    net = build(cfg).double()
    g = torch.Generator().manual_seed(2)
    image = torch.rand(1, 3, 16, 16, generator=g, dtype=torch.float64)
    area = (torch.rand(1, 1, 16, 16, generator=g) > 0.5).to(torch.float64)
    edge = (torch.rand(1, 1, 16, 16, generator=g) > 0.8).to(torch.float64)

    def loss() -> torch.Tensor:
        pred = net(image)
        return hybrid_loss(pred.road_prob, area, pred.edge_prob, edge)

    named = dict(net.named_parameters())
    sampled = [
        named["encoder.stem.conv1.weight"],
        named["decoder.levels.0.cgm.fuse.weight"],
        named["decoder_bridges.level1.spatial.weight"],
        named["side_encoder.stem.conv1.weight"],
    ]
    worst, checked = compare_gradients(loss, sampled, [4, 4, 4, 4], g)
    assert checked == 16
    assert worst <= 1e-3


def test_every_parameter_receives_gradient(tiny_dtnet):
    net = build(tiny_dtnet)
    x = torch.rand(2, 3, 32, 32)
    area = (torch.rand(2, 1, 32, 32) > 0.5).float()
    pred = net(x)
    hybrid_loss(pred.road_prob, area, pred.edge_prob, area).backward()
    for name, p in net.named_parameters():
        assert p.grad is not None, name
        assert torch.isfinite(p.grad).all(), name


def test_containers_compose_to_the_network_forward(tiny_dtnet):
    net = build(tiny_dtnet).eval()
    x = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(9))
    with torch.no_grad():
        side = net.side_encoder(x)
        enc = net.encoder(x, side, net.encoder_bridges)
        side_levels = net.side_decoder(side[-1])
        d = net.decoder(enc, side_levels, net.decoder_bridges)
        pred = net(x)
    assert [tuple(f.shape[-2:]) for f in enc] == [(32, 32), (16, 16), (8, 8), (4, 4), (2, 2)]
    assert [f.shape[1] for f in enc] == [2, 4, 8, 16, 32]
    assert [tuple(f.shape[-2:]) for f in side_levels] == [(4, 4), (8, 8), (16, 16), (32, 32)]
    assert torch.equal(torch.sigmoid(net.head(d)), pred.road_prob)
    assert torch.equal(torch.sigmoid(net.side_head(side_levels[-1])), pred.edge_prob)


def test_encoder_without_side_ignores_bridges(tiny_dtnet):
    net = build(tiny_dtnet).eval()
    x = torch.rand(1, 3, 32, 32)
    with torch.no_grad():
        plain = net.encoder(x)
        bridged = net.encoder(x, net.side_encoder(x), net.encoder_bridges)
    assert torch.equal(plain[0], bridged[0])
    # placement I bridges every encoder level
    assert not torch.equal(plain[1], bridged[1])

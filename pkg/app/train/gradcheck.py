"""
Central-difference gradient checks for the building blocks, fusion modules
and losses, in float64 with normalization disabled.

Each case projects its output onto a fixed random weighting, so one scalar
function is differentiated both ways; every input entry and a seeded subset
of every parameter tensor are compared. Rectifier kinks are avoided by
redrawing inputs and weights until every ReLU input is at least RELU_MARGIN
away from zero.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import pandas as pd
import torch
from torch import nn

from app.core.log import get_logger
from app.nn.blocks import BlockSpec, DownBlock, ResidualBlock, UpBlock, init_weights
from app.nn.cgm import CGM, CgmVariant
from app.nn.fbm import DeepBridge, FbmVariant, ShallowBridge
from app.train.losses import bce_loss, focal_loss, iou_loss

logger = get_logger(__name__)

STEP = 1e-5
TOLERANCE = 1e-4
GRAD_FLOOR = 1e-3  # relative error denominators never drop below this
RELU_MARGIN = 1e-3
MAX_ENTRIES = 24  # parameter entries checked per tensor
MAX_REDRAWS = 50

InputFactory = Callable[[torch.Generator], List[torch.Tensor]]


@dataclass
class GradCase:
    name: str
    make_module: Callable[[], nn.Module]
    make_inputs: InputFactory
    n_diff_inputs: int  # leading inputs that are differentiated; the rest are constants


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    checked: int
    redraws: int

    def passed(self, tolerance: float = TOLERANCE) -> bool:
        return self.max_rel_error <= tolerance


class LossWrapper(nn.Module):
    """Wraps a per-image loss so it can be checked like a module: forward(p, t)."""

    def __init__(self, fn: Callable[..., torch.Tensor], **kwargs) -> None:
        super().__init__()
        self.fn = fn
        self.kwargs = kwargs

    def forward(self, p: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        return self.fn(p, t, **self.kwargs)


def _normal(*shape: int) -> InputFactory:
    return lambda g: [torch.randn(*shape, generator=g, dtype=torch.float64)]


def _normal_many(*shapes: Tuple[int, ...]) -> InputFactory:
    return lambda g: [torch.randn(*s, generator=g, dtype=torch.float64) for s in shapes]


def _prob_and_target(shape: Tuple[int, ...]) -> InputFactory:
    def make(g: torch.Generator) -> List[torch.Tensor]:
        p = 0.05 + 0.9 * torch.rand(*shape, generator=g, dtype=torch.float64)
        t = (torch.rand(*shape, generator=g, dtype=torch.float64) > 0.5).to(torch.float64)
        return [p, t]
    return make


def default_cases() -> List[GradCase]:
    pair = ((2, 3, 6, 6), (2, 3, 6, 6))
    cases = [
        GradCase("ResidualBlock", lambda: ResidualBlock(BlockSpec(2, 3, normalization=False)), _normal(2, 2, 6, 6), 1),
        GradCase("DownBlock", lambda: DownBlock(BlockSpec(2, 3, normalization=False)), _normal(2, 2, 6, 6), 1),
        GradCase("UpBlock", lambda: UpBlock(BlockSpec(3, 2, normalization=False)), _normal(2, 3, 3, 3), 1),
    ]
    for variant in CgmVariant:
        cases.append(GradCase(f"CGM({variant.value})", lambda v=variant: CGM(3, v), _normal_many(*pair), 2))
    for variant in (FbmVariant.BASE_CONCAT, FbmVariant.BASE_ADD, FbmVariant.MASK_BRIDGE):
        cases.append(GradCase(f"FBM({variant.value})", lambda v=variant: ShallowBridge(3, v), _normal_many(*pair), 2))
    cases.append(GradCase(
        "FBM(d)", lambda: DeepBridge(3, 4), _normal_many((2, 3, 6, 6), (2, 3, 6, 6), (2, 4, 6, 6)), 3,
    ))
    shape = (2, 1, 5, 5)
    cases += [
        GradCase("bce_loss", lambda: LossWrapper(bce_loss), _prob_and_target(shape), 1),
        GradCase("iou_loss", lambda: LossWrapper(iou_loss), _prob_and_target(shape), 1),
        GradCase("iou_loss(log)", lambda: LossWrapper(iou_loss, log=True), _prob_and_target(shape), 1),
        GradCase("focal_loss", lambda: LossWrapper(focal_loss, lam=0.75, gamma=2.0), _prob_and_target(shape), 1),
    ]
    return cases


def relu_margin(module: nn.Module, inputs: Sequence[torch.Tensor]) -> float:
    """Smallest |input| seen by any nn.ReLU during one forward pass (inf if none)."""
    smallest = [float("inf")]

    def hook(_m, args, _out):
        smallest[0] = min(smallest[0], args[0].detach().abs().min().item())

    handles = [m.register_forward_hook(hook) for m in module.modules() if isinstance(m, nn.ReLU)]
    try:
        with torch.no_grad():
            module(*inputs)
    finally:
        for h in handles:
            h.remove()
    return smallest[0]


def _sample_indices(numel: int, limit: int, g: torch.Generator) -> List[int]:
    if numel <= limit:
        return list(range(numel))
    return torch.randperm(numel, generator=g)[:limit].tolist()


def compare_gradients(
    fn: Callable[[], torch.Tensor],
    tensors: Sequence[torch.Tensor],
    limits: Sequence[int],
    g: torch.Generator,
    step: float = STEP,
) -> Tuple[float, int]:
    """
    fn() returns a scalar built from `tensors` (leaves with requires_grad).
    Returns (max relative error, number of entries compared).
    """
    analytic = torch.autograd.grad(fn(), list(tensors), allow_unused=True)
    worst, checked = 0.0, 0
    for tensor, grad, limit in zip(tensors, analytic, limits):
        flat = tensor.data.view(-1)
        grad_flat = torch.zeros_like(flat) if grad is None else grad.reshape(-1)
        for i in _sample_indices(flat.numel(), limit, g):
            original = flat[i].item()
            with torch.no_grad():
                flat[i] = original + step
                plus = fn().item()
                flat[i] = original - step
                minus = fn().item()
                flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            a = grad_flat[i].item()
            err = abs(a - numeric) / max(abs(a), abs(numeric), GRAD_FLOOR)
            worst = max(worst, err)
            checked += 1
    return worst, checked


def check_case(case: GradCase, seed: int = 0, step: float = STEP) -> GradCheckResult:
    g = torch.Generator().manual_seed(seed)
    for attempt in range(MAX_REDRAWS):
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed * 1000 + attempt)
            module = case.make_module()
            module.apply(init_weights)
        module = module.double()
        inputs = case.make_inputs(g)
        if relu_margin(module, inputs) >= RELU_MARGIN:
            break
    else:
        raise RuntimeError(f"{case.name}: could not draw inputs away from ReLU kinks")

    diff_inputs = [x.requires_grad_(True) for x in inputs[:case.n_diff_inputs]]
    constants = inputs[case.n_diff_inputs:]
    params = [p for p in module.parameters() if p.requires_grad]
    with torch.no_grad():
        out_shape = module(*diff_inputs, *constants).shape
    weights = torch.randn(out_shape, generator=g, dtype=torch.float64)

    def scalar() -> torch.Tensor:
        return (module(*diff_inputs, *constants) * weights).sum()

    limits = [x.numel() for x in diff_inputs] + [MAX_ENTRIES] * len(params)
    worst, checked = compare_gradients(scalar, [*diff_inputs, *params], limits, g, step)
    return GradCheckResult(case.name, worst, checked, attempt)


def run_suite(
    seed: int = 0,
    step: float = STEP,
    tolerance: float = TOLERANCE,
    cases: Sequence[GradCase] | None = None,
) -> pd.DataFrame:
    """One row per case: case, max_rel_error, checked, redraws, passed."""
    t0 = time.time()
    rows: List[Dict[str, object]] = []
    for case in cases or default_cases():
        result = check_case(case, seed, step)
        rows.append({
            "case": result.name,
            "max_rel_error": result.max_rel_error,
            "checked": result.checked,
            "redraws": result.redraws,
            "passed": result.passed(tolerance),
        })
        logger.debug("gradcheck %s: %.3e over %d entries", result.name, result.max_rel_error, result.checked)
    frame = pd.DataFrame.from_records(rows, columns=["case", "max_rel_error", "checked", "redraws", "passed"])
    logger.info(
        "gradcheck: %d/%d cases within %.0e (%.1fs)",
        int(frame["passed"].sum()), len(frame), tolerance, time.time() - t0,
    )
    return frame

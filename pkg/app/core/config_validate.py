from __future__ import annotations

from typing import Tuple

from app.core.config import NetworkConfig, Placement, RunConfig, SyntheticSource
from app.nn.cgm import CgmVariant
from app.nn.fbm import FbmVariant

STRIDE = 16


def validate_network_config(cfg: NetworkConfig) -> Tuple[bool, list[str]]:
    """
    Returns (is_ok, messages).
    - messages are the problems when is_ok is False, soft warnings otherwise
    - FBM (d) is never legal at encoder positions
    - a fusion placement needs a side branch to fuse from
    """
    problems: list[str] = []
    warnings: list[str] = []

    if cfg.fbm_encoder_variant is FbmVariant.DEEP_MASK_BRIDGE:
        problems.append("FBM (d) requested at encoder positions; it is only legal in the decoder.")

    if cfg.placement is not Placement.NONE and not cfg.side_branch:
        problems.append(f"placement {cfg.placement.value} needs side_branch=true.")

    if problems:
        return False, problems

    # Soft warnings
    if cfg.side_branch and cfg.placement is Placement.NONE:
        warnings.append("Side branch is trained but never fused into the main branch (placement none).")
    if cfg.cgm_variant is not CgmVariant.BASE and not any(cfg.cgm_levels):
        warnings.append("cgm_levels disables every fusion point; the network behaves like CGM(base).")
    if not cfg.normalization:
        warnings.append("Normalization disabled (gradient-check mode).")

    return True, warnings


def validate_input_size(height: int, width: int) -> Tuple[bool, list[str]]:
    if height < STRIDE or width < STRIDE:
        return False, [f"input {height}x{width} is smaller than the total stride {STRIDE}."]
    if height % STRIDE or width % STRIDE:
        return False, [f"input {height}x{width} is not divisible by {STRIDE}."]
    return True, []


def last_batch_policy(
    cfg: NetworkConfig, height: int, width: int, batch_size: int, n_train: int
) -> Tuple[bool, list[str]]:
    """
    Returns (drop_last, problems).
    With normalization on and a 1x1 deepest feature, batch norm in training
    mode sees one value per channel unless a batch holds at least two images.
    """
    if not cfg.normalization or (height // STRIDE) * (width // STRIDE) > 1:
        return False, []
    if batch_size < 2 or n_train < 2:
        return False, [
            f"{height}x{width} inputs reduce to 1x1 at the deepest level; with normalization "
            f"on, training needs batch_size >= 2 and at least two training images "
            f"(got batch_size={batch_size}, {n_train} image(s))."
        ]
    return n_train % batch_size == 1, []


def validate_config(cfg: RunConfig) -> Tuple[bool, list[str]]:
    """Whole-run check: the network rules plus data/evaluation settings."""
    ok, messages = validate_network_config(cfg.network)
    problems = [] if ok else list(messages)
    warnings = list(messages) if ok else []

    if isinstance(cfg.data, SyntheticSource):
        size_ok, size_problems = validate_input_size(cfg.data.size, cfg.data.size)
        problems.extend(size_problems if not size_ok else [])
        if size_ok:
            _, batch_problems = last_batch_policy(
                cfg.network, cfg.data.size, cfg.data.size, cfg.batch_size, cfg.data.n_train
            )
            problems.extend(batch_problems)

    if cfg.eval_every > cfg.epochs:
        warnings.append("eval_every exceeds epochs; only the final epoch is evaluated.")

    if problems:
        return False, problems
    return True, warnings

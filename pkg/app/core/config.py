"""
Configuration records.

NetworkConfig   architecture choice (CGM/FBM variants, placement, side branch)
LossParams      weights and constants of the hybrid objective
RunConfig       everything a training/evaluation run needs

All records are pydantic models so they round-trip through JSON (and load
from TOML). `apply_overrides` applies dotted-key deltas, used by the CLI
(`--set network.cgm_variant=a`) and by ablation grids.
"""
from __future__ import annotations

import copy
import json
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core import settings
from app.core.errors import ConfigurationError
from app.nn.cgm import CgmVariant
from app.nn.fbm import FbmVariant

LEVELS = (1, 2, 3, 4)


class Placement(str, Enum):
    """Which levels receive side-to-main bridges.

    Encoder level k is the output of the k-th down-sampling block (k=4 deepest);
    decoder level k is the k-th decoder stage (k=1 deepest).
    """
    NONE = "none"
    I = "I"  # noqa: E741
    II = "II"
    III = "III"
    IV = "IV"

    @property
    def encoder_levels(self) -> Tuple[int, ...]:
        if self in (Placement.I, Placement.II):
            return LEVELS
        if self is Placement.IV:
            return (4,)
        return ()

    @property
    def decoder_levels(self) -> Tuple[int, ...]:
        if self in (Placement.I, Placement.III):
            return LEVELS
        if self is Placement.IV:
            return (1,)
        return ()


class NetworkConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_width: int = Field(32, ge=1)
    depth: Literal[4] = 4
    cgm_variant: CgmVariant = CgmVariant.BASE
    # decoder levels 1..4 (deepest first); False falls back to CGM(base)
    cgm_levels: Tuple[bool, bool, bool, bool] = (True, True, True, True)
    fbm_encoder_variant: FbmVariant = FbmVariant.BASE_CONCAT
    fbm_decoder_variant: FbmVariant = FbmVariant.BASE_CONCAT
    placement: Placement = Placement.NONE
    side_branch: bool = False
    normalization: bool = True
    q_rescale: bool = False
    seed: int = 0

    @property
    def widths(self) -> List[int]:
        """Stem width followed by the four encoder stage widths."""
        return [self.base_width * 2 ** k for k in range(self.depth + 1)]

    def cgm_variant_at(self, level: int) -> CgmVariant:
        return self.cgm_variant if self.cgm_levels[level - 1] else CgmVariant.BASE

    @classmethod
    def baseline(cls, **kwargs: Any) -> "NetworkConfig":
        """E + D + CGM(base), single task."""
        return cls(**kwargs)

    @classmethod
    def dtnet(cls, **kwargs: Any) -> "NetworkConfig":
        """CGM(a), encoder FBM(c), decoder FBM(d), placement I."""
        params: Dict[str, Any] = dict(
            cgm_variant=CgmVariant.A,
            fbm_encoder_variant=FbmVariant.MASK_BRIDGE,
            fbm_decoder_variant=FbmVariant.DEEP_MASK_BRIDGE,
            placement=Placement.I,
            side_branch=True,
        )
        params.update(kwargs)
        return cls(**params)


def attach_side_branch(
    base: NetworkConfig,
    encoder_variant: FbmVariant | str = FbmVariant.MASK_BRIDGE,
    decoder_variant: FbmVariant | str = FbmVariant.DEEP_MASK_BRIDGE,
    placement: Placement | str = Placement.I,
) -> NetworkConfig:
    """Turn a single-task config into its "+ Side_B" counterpart."""
    if base.side_branch:
        raise ConfigurationError("config already has a side branch")
    return base.model_copy(update=dict(
        side_branch=True,
        fbm_encoder_variant=FbmVariant(encoder_variant),
        fbm_decoder_variant=FbmVariant(decoder_variant),
        placement=Placement(placement),
    ))


def detach_side_branch(config: NetworkConfig) -> NetworkConfig:
    defaults = NetworkConfig()
    return config.model_copy(update=dict(
        side_branch=False,
        fbm_encoder_variant=defaults.fbm_encoder_variant,
        fbm_decoder_variant=defaults.fbm_decoder_variant,
        placement=Placement.NONE,
    ))


class LossParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    a1: float = Field(1.0, ge=0)
    a2: float = Field(1.0, ge=0)
    a3: float = Field(1.0, ge=0)
    lam: float = Field(0.75, gt=0, lt=1)
    gamma: float = Field(2.0, ge=0)
    stabilizer: float = Field(1e-6, gt=0)
    prob_eps: float = Field(1e-7, gt=0, lt=0.5)
    iou_log: bool = False

    @field_validator("a1", "a2", "a3", "gamma", "stabilizer")
    @classmethod
    def _finite(cls, v: float) -> float:
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("must be finite")
        return v


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["adam", "sgd"] = "adam"
    lr: float = Field(1e-3, gt=0)
    schedule: Literal["none", "step", "cosine"] = "none"
    step_size: int = Field(10, ge=1)
    step_gamma: float = Field(0.5, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    momentum: float = Field(0.9, ge=0)


class SyntheticSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["synthetic"] = "synthetic"
    n_train: int = Field(200, ge=1)
    n_test: int = Field(50, ge=1)
    size: int = Field(64, ge=16)
    seed: int = 0

    @field_validator("size")
    @classmethod
    def _divisible(cls, v: int) -> int:
        if v % 16:
            raise ValueError("synthetic size must be divisible by 16")
        return v


class ManifestSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["manifest"] = "manifest"
    root: Path
    edge_width: int = Field(2, ge=1)


DataSource = Union[SyntheticSource, ManifestSource]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    network: NetworkConfig = Field(default_factory=NetworkConfig)
    loss: LossParams = Field(default_factory=LossParams)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    data: DataSource = Field(default_factory=SyntheticSource, discriminator="kind")
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(50, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    eval_every: int = Field(1, ge=1)
    threshold: float = Field(0.5, gt=0, lt=1)
    eval_mode: Literal["macro", "micro"] = "macro"
    num_workers: int = Field(0, ge=0)
    output_dir: Path = Field(default_factory=lambda: settings.output_dir() / "run")
    seed: int = 0


def _set_dotted(tree: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            raise ConfigurationError(f"unknown config section '{part}' in '{key}'")
        node = child
    node[parts[-1]] = value


def parse_value(raw: str) -> Any:
    """CLI values: JSON literals when they parse (numbers, true/false, lists), else strings."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Return a new RunConfig with dotted-key overrides applied and re-validated."""
    tree = copy.deepcopy(cfg.model_dump(mode="json"))
    kind = overrides.get("data.kind")
    if kind is not None and kind != tree["data"]["kind"]:
        # fields of the other source kind do not carry over
        tree["data"] = {"kind": kind}
    for key, value in overrides.items():
        _set_dotted(tree, key, value)
    try:
        return RunConfig.model_validate(tree)
    except ValueError as e:
        raise ConfigurationError(f"invalid override {dict(overrides)}: {e}") from e


def load_run_config(path: Path) -> RunConfig:
    if not path.exists():
        raise FileNotFoundError(f"Missing config file: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        return RunConfig.model_validate(tomllib.loads(text))
    return RunConfig.model_validate_json(text)


def save_run_config(cfg: RunConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.model_dump_json(indent=2), encoding="utf-8")

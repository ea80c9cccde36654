"""
Checkpoint directory layout:

    <dir>/config.json   RunConfig (network, loss, optimizer, data, ...)
    <dir>/params.npz    state_dict tensors as numpy arrays, keyed by parameter name
    <dir>/state.json    {"step": int, "epoch": int}

Parameters are stored bit-exactly, so save -> load -> evaluate reproduces
evaluate-before-save.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from app.core.config import RunConfig, load_run_config, save_run_config
from app.core.errors import ConfigurationError
from app.core.log import get_logger
from app.nn.network import DTNet, build

logger = get_logger(__name__)

CONFIG_FILE = "config.json"
PARAMS_FILE = "params.npz"
STATE_FILE = "state.json"


@dataclass
class Checkpoint:
    config: RunConfig
    net: DTNet
    step: int = 0
    epoch: int = 0
    path: Path | None = None


def save_checkpoint(path: Path, net: DTNet, config: RunConfig, step: int = 0, epoch: int = 0) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_run_config(config, path / CONFIG_FILE)
    arrays = {name: t.detach().cpu().numpy() for name, t in net.state_dict().items()}
    with (path / PARAMS_FILE).open("wb") as f:
        np.savez(f, **arrays)
    (path / STATE_FILE).write_text(json.dumps({"step": step, "epoch": epoch}), encoding="utf-8")
    logger.info("saved checkpoint %s (step %d)", path, step)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    for name in (CONFIG_FILE, PARAMS_FILE):
        if not (path / name).exists():
            raise FileNotFoundError(f"Missing checkpoint file: {path / name}")
    config = load_run_config(path / CONFIG_FILE)
    net = build(config.network)

    expected = net.state_dict()
    with np.load(path / PARAMS_FILE) as data:
        stored = {k: data[k] for k in data.files}
    missing = sorted(set(expected) - set(stored))
    unexpected = sorted(set(stored) - set(expected))
    if missing or unexpected:
        raise ConfigurationError(
            f"checkpoint does not match its config: missing={missing[:5]} unexpected={unexpected[:5]}"
        )
    state = {}
    for name, ref in expected.items():
        arr = stored[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise ConfigurationError(f"{name}: stored shape {arr.shape}, network expects {tuple(ref.shape)}")
        state[name] = torch.from_numpy(arr).to(ref.dtype)
    net.load_state_dict(state)
    net.eval()

    step, epoch = 0, 0
    if (path / STATE_FILE).exists():
        meta = json.loads((path / STATE_FILE).read_text(encoding="utf-8"))
        step, epoch = int(meta.get("step", 0)), int(meta.get("epoch", 0))
    return Checkpoint(config=config, net=net, step=step, epoch=epoch, path=path)

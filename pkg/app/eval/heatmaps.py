"""
Feature heat maps: channel mean of a named layer's output, min-max normalized
per map, written as 8-bit grayscale (or a matplotlib colormap) PNG.

Layer names are `net.named_modules()` paths. The CGM of decoder level k
exposes its raw inputs as `decoder.levels.<k-1>.cgm.skip_tap` (encoder feature)
and `.decoder_tap` (decoder feature); the enhanced features are the outputs of
`.decoder_enhance` and `.encoder_enhance` (absent for CGM(base)).
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib
import numpy as np
import torch
from PIL import Image

from app.core.errors import ConfigurationError
from app.core.log import get_logger
from app.core.types import Sample
from app.data.dataset import image_to_tensor
from app.nn.network import DTNet, layer_names
from app.train.checkpoint import load_checkpoint

logger = get_logger(__name__)

DEFAULT_LAYERS = (
    "decoder.levels.0.cgm.skip_tap",
    "decoder.levels.0.cgm.decoder_tap",
    "decoder.levels.0.cgm.decoder_enhance",
    "decoder.levels.0.cgm.encoder_enhance",
)


def channel_mean(feature: torch.Tensor) -> np.ndarray:
    """1 x C x H x W (or C x H x W) -> H x W float64."""
    feat = feature.detach().cpu().numpy().astype(np.float64)
    if feat.ndim == 4:
        if feat.shape[0] != 1:
            raise ValueError("heat maps are computed for one image at a time")
        feat = feat[0]
    return feat.mean(axis=0)


def normalize_map(m: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; a constant map becomes 0.5 everywhere."""
    lo, hi = float(m.min()), float(m.max())
    if hi - lo <= 0.0:
        return np.full(m.shape, 0.5)
    return (m - lo) / (hi - lo)


def render(norm: np.ndarray, colormap: Optional[str] = None) -> np.ndarray:
    """uint8 H x W (grayscale) or H x W x 3 (colormap)."""
    if colormap is None:
        return np.rint(norm * 255.0).astype(np.uint8)
    try:
        cmap = matplotlib.colormaps[colormap]
    except KeyError:
        raise ConfigurationError(f"unknown colormap {colormap!r}") from None
    rgba = cmap(norm)
    return np.rint(rgba[..., :3] * 255.0).astype(np.uint8)


def capture_features(net: DTNet, image: np.ndarray, layers: Sequence[str]) -> Dict[str, torch.Tensor]:
    """Run one H x W x 3 image through the network, returning each named layer's output.

    Raises ConfigurationError for a layer that is never called during the forward
    pass (a ModuleList/ModuleDict container) or whose output is not a tensor.
    """
    modules = layer_names(net)
    unknown = [name for name in layers if name not in modules]
    if unknown:
        raise ConfigurationError(f"unknown layer name(s): {unknown}")

    captured: Dict[str, torch.Tensor] = {}
    not_tensor: List[str] = []
    handles = []
    for name in layers:
        def hook(_module, _inputs, output, name=name):
            if isinstance(output, torch.Tensor):
                captured[name] = output.detach()
            elif name not in not_tensor:
                not_tensor.append(name)
        handles.append(modules[name].register_forward_hook(hook))

    param = next(net.parameters())
    batch = image_to_tensor(image)[None].to(device=param.device, dtype=param.dtype)
    was_training = net.training
    try:
        if was_training:
            net.eval()
        with torch.no_grad():
            net(batch)
    finally:
        for h in handles:
            h.remove()
        if was_training:
            net.train(True)

    if not_tensor:
        raise ConfigurationError(f"layer(s) {not_tensor} do not produce a single feature tensor")
    silent = [name for name in layers if name not in captured]
    if silent:
        raise ConfigurationError(f"layer(s) {silent} are never called in the forward pass")
    return captured


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def export_heatmaps(
    model: DTNet | Path,
    sample: Sample,
    out_dir: Path,
    layers: Sequence[str] = DEFAULT_LAYERS,
    colormap: Optional[str] = None,
) -> List[Path]:
    net = load_checkpoint(Path(model)).net if not isinstance(model, DTNet) else model
    features = capture_features(net, sample.image, layers)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = sample.name or "sample"

    paths: List[Path] = []
    for name in layers:
        pixels = render(normalize_map(channel_mean(features[name])), colormap)
        path = out_dir / f"{stem}__{_slug(name)}.png"
        Image.fromarray(pixels).save(path)
        paths.append(path)
    logger.info("wrote %d heat maps for %s to %s", len(paths), stem, out_dir)
    return paths

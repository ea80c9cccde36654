"""
Command-line entry point: python -m app <command> ...

    synth      generate a synthetic dataset in the standard on-disk layout
    prep       tile/resize a manifest of large rasters with a dataset recipe
    train      train one RunConfig (--seed required)
    eval       evaluate a checkpoint
    ablate     run an ablation grid (--seed required, may repeat)
    heatmaps   export feature heat maps for one image
    gradcheck  finite-difference gradient suite
    serve      HTTP service over a checkpoint
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.core.config import NetworkConfig, RunConfig, apply_overrides, load_run_config, parse_value
from app.core.errors import ConfigurationError, DTNetError
from app.core.log import configure_logging, get_logger
from app.core.types import Sample

logger = get_logger("app.cli")

PRESETS = {
    "baseline": NetworkConfig.baseline,
    "dtnet": NetworkConfig.dtnet,
}


def _parse_set(pairs: Sequence[str]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = parse_value(raw.strip())
    return out


def build_run_config(args: argparse.Namespace, seed: Optional[int]) -> RunConfig:
    """Config file, then preset, then dedicated flags, then --set, then the seed."""
    cfg = load_run_config(Path(args.config)) if args.config else RunConfig()
    overrides: Dict[str, Any] = {}
    if args.preset:
        preset = PRESETS[args.preset]().model_dump(mode="json")
        preset.pop("seed")
        overrides.update({f"network.{k}": v for k, v in preset.items()})
    if args.data_root:
        overrides.update({"data.kind": "manifest", "data.root": str(args.data_root)})
    for flag, key in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("lr", "optimizer.lr"),
        ("max_steps", "max_steps"),
        ("output_dir", "output_dir"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value) if isinstance(value, Path) else value
    overrides.update(_parse_set(args.set))
    if seed is not None:
        overrides["seed"] = seed
        overrides["network.seed"] = seed
    return apply_overrides(cfg, overrides) if overrides else cfg


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="RunConfig file (.json or .toml)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="network preset applied before --set")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted RunConfig override")
    p.add_argument("--data-root", type=Path, help="dataset root with train/ and test/ splits")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--output-dir", type=Path)


def cmd_synth(args: argparse.Namespace) -> int:
    from app.data.dataset import synthetic_split_seeds
    from app.data.manifest import write_samples
    from app.data.synth import synth_generate

    train_seed, test_seed = synthetic_split_seeds(args.seed)
    write_samples(synth_generate(args.n_train, args.size, train_seed), args.out, "train")
    write_samples(synth_generate(args.n_test, args.size, test_seed), args.out, "test")
    print(f"✅ synthetic dataset: {args.n_train} train / {args.n_test} test at {args.size}px -> {args.out}")
    return 0


def cmd_prep(args: argparse.Namespace) -> int:
    from app.data.recipes import prep

    out = prep(args.manifest, args.recipe, args.out, seed=args.seed, total=args.count, edge_width=args.edge_width)
    print(f"✅ {args.recipe}: {len(out['train'].pairs)} train / {len(out['test'].pairs)} test -> {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from app.eval.report import format_table, single_report, write_report
    from app.train.trainer import train

    cfg = build_run_config(args, args.seed)
    result = train(cfg, progress=args.progress)
    if result.report is not None:
        frame = single_report(result.report, name="test")
        write_report(frame, Path(cfg.output_dir))
        print(format_table(frame))
    print(f"💾 checkpoint: {result.checkpoint}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from app.eval.evaluate import evaluate
    from app.eval.report import format_table, single_report, write_report

    report = evaluate(args.checkpoint, args.root, args.split, args.mode, args.threshold)
    frame = single_report(report, name=args.split)
    files = write_report(frame, args.out or Path(args.checkpoint), stem=f"eval_{args.split}")
    print(format_table(frame))
    print(f"💾 {files['table']}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    from app.eval.report import format_table
    from app.train.ablation import ablate, get_grid

    cfg = build_run_config(args, args.seed[0])
    result = ablate(get_grid(args.grid), cfg, seeds=args.seed)
    print(format_table(result.table))
    print(f"💾 {result.files['table']}  {result.files['series']}")
    failed = (result.table["status"] != "ok").sum()
    return 1 if failed == len(result.table) else 0


def cmd_heatmaps(args: argparse.Namespace) -> int:
    from app.data.manifest import read_image
    from app.eval.heatmaps import DEFAULT_LAYERS, export_heatmaps

    image = read_image(args.image)
    blank = np.zeros(image.shape[:2], dtype=np.uint8)
    sample = Sample(image=image, area=blank, edge=blank, name=Path(args.image).stem)
    paths = export_heatmaps(args.checkpoint, sample, args.out, args.layers or DEFAULT_LAYERS, args.colormap)
    for p in paths:
        print(p)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from app.train.gradcheck import run_suite

    frame = run_suite(seed=args.seed, tolerance=args.tolerance)
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.3e}"))
    return 0 if frame["passed"].all() else 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    if args.checkpoint:
        os.environ["DTNET_CHECKPOINT"] = str(args.checkpoint)
    uvicorn.run("app.api.main:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description="Dual-task road detection lab")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="tile/resize source rasters with a dataset recipe")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--recipe", choices=["munich", "massachusetts", "loveda"], required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, help="override the recipe's tile count")
    p.add_argument("--edge-width", type=int, default=2)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train one configuration")
    _add_run_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--root", type=Path, help="dataset root; defaults to the checkpoint's own data source")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--mode", choices=["macro", "micro"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid")
    _add_run_flags(p)
    p.add_argument("--grid", required=True, help="cgm | side_branch | fbm | span | path to a grid JSON")
    p.add_argument("--seed", type=int, action="append", required=True, help="repeat for multi-seed medians")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("heatmaps", help="export feature heat maps")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--layer", dest="layers", action="append", help="module path; repeat for several")
    p.add_argument("--colormap", help="matplotlib colormap name; grayscale when omitted")
    p.set_defaults(func=cmd_heatmaps)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="HTTP service")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except (DTNetError, FileNotFoundError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 2


if __name__ == "__main__":
    sys.exit(main())

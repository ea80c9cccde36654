# scripts/run_synthetic_experiment.py
"""
Desk-scale version of the main comparison: 200 train / 50 test synthetic
64x64 images, 3 seeds.

  - full dual-task network vs the single-task baseline (median test IOU)
  - CGM grid and FBM x placement grid tables

Directional checks only: the full network should reach a median IOU of at
least 0.80 and should not fall below the baseline.
"""
import argparse
import sys
from pathlib import Path

from app.core import settings
from app.core.config import RunConfig, SyntheticSource
from app.core.log import configure_logging
from app.data.dataset import load_split
from app.eval.report import format_table
from app.train.ablation import AblationGrid, GridEntry, SIDE_BRANCH_DELTA, ablate, cgm_grid, fbm_grid

IOU_TARGET = 0.80


def headline_grid() -> AblationGrid:
    return AblationGrid("headline", [
        GridEntry("baseline", {"network.cgm_variant": "base", "network.side_branch": False, "network.placement": "none"}),
        GridEntry("DTNet", {"network.cgm_variant": "a", **SIDE_BRANCH_DELTA}),
    ])


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--skip-grids", action="store_true", help="only run the headline comparison")
    args = parser.parse_args()

    configure_logging()
    base = RunConfig(
        data=SyntheticSource(n_train=200, n_test=50, size=64, seed=0),
        epochs=args.epochs,
        eval_every=args.epochs,
        output_dir=settings.output_dir() / "synthetic_experiment",
    )
    train_samples = load_split(base.data, "train")
    test_samples = load_split(base.data, "test")

    grids = [headline_grid()] if args.skip_grids else [headline_grid(), cgm_grid(), fbm_grid()]
    tables = {}
    for grid in grids:
        print(f"\n=== {grid.name} ({len(grid.entries)} configs x {len(args.seeds)} seeds) ===")
        result = ablate(grid, base, args.seeds, train_samples=train_samples, test_samples=test_samples)
        tables[grid.name] = result.table
        print(format_table(result.table))

    headline = tables["headline"].set_index("config")
    dtnet_iou = headline.loc["DTNet", "IOU"] / 100.0
    base_iou = headline.loc["baseline", "IOU"] / 100.0
    checks = {
        f"DTNet median IOU {dtnet_iou:.4f} >= {IOU_TARGET}": dtnet_iou >= IOU_TARGET,
        f"DTNet {dtnet_iou:.4f} >= baseline {base_iou:.4f}": dtnet_iou >= base_iou,
    }
    for grid_name, table in tables.items():
        checks[f"{grid_name} table complete"] = bool(table[["IOU", "F1", "Recall", "Precision"]].notna().all().all())

    print()
    for label, ok in checks.items():
        print(("✅ " if ok else "❌ ") + label)
    print(f"\n💾 outputs under {Path(base.output_dir)}\n")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())

"""
Ablation runner: train + evaluate one RunConfig per grid entry (and per seed),
then emit a comparison table (rows = configs, columns = IOU/F1/Recall/Precision)
and a long-format series file for plotting.

Built-in grids:
    cgm          CGM(base), CGM(a) .. CGM(d) on the single-task network
    side_branch  each CGM variant with and without the edge side branch
    fbm          FBM(base_a|base_b|c) x placement I..IV, plus FBM(c,d)(I)
    span         one CGM fusion point at a time, per variant (cross-layer sweep)
"""
from __future__ import annotations

import json
import re
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from app.core.audit import write_audit_event
from app.core.config import Placement, RunConfig, apply_overrides
from app.core.config_validate import validate_network_config
from app.core.errors import ConfigurationError, DTNetError
from app.core.log import get_logger
from app.core.types import Sample
from app.data.dataset import load_split
from app.eval.metrics import COLUMNS, MetricReport
from app.eval.report import report_frame, write_report
from app.nn.cgm import CgmVariant
from app.nn.fbm import FbmVariant
from app.train.trainer import TrainResult, train

logger = get_logger(__name__)

SERIES_FILE = "series.csv"


@dataclass(frozen=True)
class GridEntry:
    name: str
    delta: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class AblationGrid:
    name: str
    entries: List[GridEntry]

    def configs(self, base: RunConfig) -> Dict[str, RunConfig]:
        """Apply every delta; raises ConfigurationError naming the first unbuildable entry."""
        out: Dict[str, RunConfig] = {}
        for entry in self.entries:
            if entry.name in out:
                raise ConfigurationError(f"grid {self.name}: duplicate entry {entry.name!r}")
            cfg = apply_overrides(base, dict(entry.delta))
            ok, problems = validate_network_config(cfg.network)
            if not ok:
                raise ConfigurationError(f"grid {self.name}: entry {entry.name!r}: {'; '.join(problems)}")
            out[entry.name] = cfg
        return out


@dataclass
class AblationResult:
    table: pd.DataFrame
    series: pd.DataFrame
    files: Dict[str, Path] = field(default_factory=dict)


CGM_VARIANTS = [v.value for v in CgmVariant]
SIDE_BRANCH_DELTA = {
    "network.side_branch": True,
    "network.fbm_encoder_variant": FbmVariant.MASK_BRIDGE.value,
    "network.fbm_decoder_variant": FbmVariant.DEEP_MASK_BRIDGE.value,
    "network.placement": Placement.I.value,
}


def cgm_grid() -> AblationGrid:
    return AblationGrid("cgm", [
        GridEntry(f"CGM({v})", {"network.cgm_variant": v, "network.side_branch": False, "network.placement": "none"})
        for v in CGM_VARIANTS
    ])


def side_branch_grid() -> AblationGrid:
    entries: List[GridEntry] = []
    for v in CGM_VARIANTS:
        single = {"network.cgm_variant": v, "network.side_branch": False, "network.placement": "none"}
        entries.append(GridEntry(f"CGM({v})", single))
        entries.append(GridEntry(f"CGM({v}) + Side_B", {"network.cgm_variant": v, **SIDE_BRANCH_DELTA}))
    return AblationGrid("side_branch", entries)


def fbm_grid() -> AblationGrid:
    entries: List[GridEntry] = []
    for variant in (FbmVariant.BASE_CONCAT, FbmVariant.BASE_ADD, FbmVariant.MASK_BRIDGE):
        for placement in (Placement.I, Placement.II, Placement.III, Placement.IV):
            entries.append(GridEntry(f"FBM({variant.value})({placement.value})", {
                "network.side_branch": True,
                "network.fbm_encoder_variant": variant.value,
                "network.fbm_decoder_variant": variant.value,
                "network.placement": placement.value,
            }))
    entries.append(GridEntry("FBM(c,d)(I)", dict(SIDE_BRANCH_DELTA)))
    return AblationGrid("fbm", entries)


def span_grid(variants: Sequence[str] = ("a", "b", "c", "d")) -> AblationGrid:
    """Decoder level k fuses encoder output 4-k (0 = stem) with decoder stage k; one fusion point per run."""
    entries: List[GridEntry] = []
    for v in variants:
        for level in (1, 2, 3, 4):
            flags = [k == level for k in (1, 2, 3, 4)]
            entries.append(GridEntry(f"CGM({v}) E{4 - level}&D{level}", {
                "network.cgm_variant": v,
                "network.cgm_levels": flags,
            }))
    return AblationGrid("span", entries)


GRIDS: Dict[str, Callable[[], AblationGrid]] = {
    "cgm": cgm_grid,
    "side_branch": side_branch_grid,
    "fbm": fbm_grid,
    "span": span_grid,
}


def get_grid(name: str) -> AblationGrid:
    """A built-in grid name, or a path to a JSON file {"name": ..., "entries": [{"name", "delta"}]}."""
    if name in GRIDS:
        return GRIDS[name]()
    path = Path(name)
    if not path.exists():
        raise ConfigurationError(f"unknown grid {name!r}; built-ins are {sorted(GRIDS)}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    entries = [GridEntry(e["name"], e.get("delta", {})) for e in raw.get("entries", [])]
    if not entries:
        raise ConfigurationError(f"grid file {path} has no entries")
    return AblationGrid(raw.get("name", path.stem), entries)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "run"


def median_report(reports: Sequence[MetricReport]) -> MetricReport:
    return MetricReport(
        **{k: float(statistics.median(getattr(r, k) for r in reports)) for k in COLUMNS},
        mode=reports[0].mode,
    )


def ablate(
    grid: AblationGrid,
    base: RunConfig,
    seeds: Sequence[int],
    out_dir: Optional[Path] = None,
    train_samples: Optional[Sequence[Sample]] = None,
    test_samples: Optional[Sequence[Sample]] = None,
    runner: Callable[..., TrainResult] = train,
) -> AblationResult:
    """
    Every entry runs once per seed (run seed and weight seed both set to it).
    A failing run is recorded in the series and the remaining runs continue;
    the table holds the per-config median over successful seeds, or a failure
    marker when none succeeded.
    """
    if not seeds:
        raise ConfigurationError("ablate needs at least one seed")
    out_dir = Path(out_dir or base.output_dir) / grid.name
    configs = grid.configs(base)

    if train_samples is None:
        train_samples = load_split(base.data, "train")
    if test_samples is None:
        test_samples = load_split(base.data, "test")

    rows: Dict[str, MetricReport | str] = {}
    series: List[Dict[str, Any]] = []
    for entry in grid.entries:
        reports: List[MetricReport] = []
        errors: List[str] = []
        for seed in seeds:
            cfg = apply_overrides(configs[entry.name], {
                "seed": seed,
                "network.seed": seed,
                "output_dir": str(out_dir / _slug(entry.name) / f"seed{seed}"),
            })
            own_data = any(k.startswith("data.") for k in entry.delta)
            t0 = time.time()
            record: Dict[str, Any] = {"grid": grid.name, "config": entry.name, "seed": seed}
            try:
                result = runner(
                    cfg,
                    None if own_data else train_samples,
                    None if own_data else test_samples,
                )
                if result.report is None:
                    raise DTNetError("run produced no test report")
                reports.append(result.report)
                record.update({k: getattr(result.report, k) for k in COLUMNS}, status="ok")
            except Exception as e:  # a failing configuration never aborts the grid
                logger.warning("ablation %s/%s seed %d failed: %s", grid.name, entry.name, seed, e)
                errors.append(f"{type(e).__name__}: {e}")
                record.update({k: None for k in COLUMNS}, status=f"failed: {type(e).__name__}: {e}")
            series.append(record)
            write_audit_event({
                "type": "ablation_run",
                **record,
                "delta": dict(entry.delta),
                "latency_ms": int((time.time() - t0) * 1000),
            })
        rows[entry.name] = median_report(reports) if reports else "; ".join(errors)

    table = report_frame(rows)
    series_frame = pd.DataFrame.from_records(series, columns=["grid", "config", "seed", *COLUMNS, "status"])
    files = write_report(table, out_dir, stem=grid.name)
    series_path = out_dir / SERIES_FILE
    series_frame.to_csv(series_path, index=False)
    files["series"] = series_path
    logger.info("ablation %s: %d configs x %d seeds -> %s", grid.name, len(grid.entries), len(seeds), out_dir)
    return AblationResult(table=table, series=series_frame, files=files)

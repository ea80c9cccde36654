from __future__ import annotations

import json

import pandas as pd
import pytest

from app.core.config import NetworkConfig, RunConfig
from app.core.errors import ConfigurationError, DivergenceError
from app.eval.metrics import MetricReport
from app.nn.network import DTNet
from app.train.ablation import GRIDS, AblationGrid, GridEntry, ablate, get_grid, median_report
from app.train.trainer import TrainResult, train


def test_builtin_grids_are_buildable():
    base = RunConfig(network=NetworkConfig.dtnet(base_width=2))
    sizes = {}
    for name in GRIDS:
        configs = get_grid(name).configs(base)
        for cfg in configs.values():
            DTNet(cfg.network)
        sizes[name] = len(configs)
    assert sizes == {"cgm": 5, "side_branch": 10, "fbm": 13, "span": 16}


def test_grid_names_match_table_rows():
    names = [e.name for e in get_grid("fbm").entries]
    assert names[0] == "FBM(base_a)(I)" and names[-1] == "FBM(c,d)(I)"
    side = get_grid("side_branch").configs(RunConfig())
    assert not side["CGM(a)"].network.side_branch
    assert side["CGM(a) + Side_B"].network.side_branch
    span = get_grid("span").configs(RunConfig())
    assert span["CGM(b) E1&D3"].network.cgm_levels == (False, False, True, False)


def test_grid_from_json(tmp_path):
    path = tmp_path / "mine.json"
    path.write_text(json.dumps({"name": "mine", "entries": [{"name": "wide", "delta": {"network.base_width": 4}}]}))
    grid = get_grid(str(path))
    assert grid.name == "mine" and grid.entries[0].delta == {"network.base_width": 4}
    with pytest.raises(ConfigurationError):
        get_grid("no_such_grid")


def test_unbuildable_entry_named():
    grid = AblationGrid("bad", [GridEntry("enc-d", {
        "network.side_branch": True, "network.placement": "I", "network.fbm_encoder_variant": "d",
    })])
    with pytest.raises(ConfigurationError, match="enc-d"):
        grid.configs(RunConfig())


def test_single_entry_grid_equals_single_run(tiny_run, tmp_path):
    grid = AblationGrid("one", [GridEntry("CGM(a)", {"network.cgm_variant": "a"})])
    result = ablate(grid, tiny_run, seeds=[5], out_dir=tmp_path / "abl")

    cfg = tiny_run.model_copy(update={
        "network": tiny_run.network.model_copy(update={"seed": 5}),
        "output_dir": tmp_path / "single",
    })
    direct = train(cfg).report.as_percent()
    row = result.table.set_index("config").loc["CGM(a)"]
    for column, value in direct.items():
        assert row[column] == value
    assert row["status"] == "ok"

    assert (tmp_path / "abl" / "one" / "one.txt").exists()
    series = pd.read_csv(result.files["series"])
    assert list(series.columns) == ["grid", "config", "seed", "iou", "f1", "recall", "precision", "status"]


def _report(iou: float) -> MetricReport:
    return MetricReport(iou=iou, f1=iou, recall=iou, precision=iou)


def test_failures_are_recorded_and_runs_continue(tiny_run, synth_small, tmp_path):
    calls = []

    def runner(cfg, train_samples, test_samples):
        calls.append((cfg.network.cgm_variant.value, cfg.seed))
        if cfg.network.cgm_variant.value == "b":
            raise DivergenceError("boom", {"step": 1})
        return TrainResult(net=None, history=[], report=_report(0.1 * cfg.seed))

    grid = AblationGrid("mixed", [
        GridEntry("CGM(a)", {"network.cgm_variant": "a"}),
        GridEntry("CGM(b)", {"network.cgm_variant": "b"}),
        GridEntry("CGM(c)", {"network.cgm_variant": "c"}),
    ])
    result = ablate(grid, tiny_run, seeds=[1, 2, 6], out_dir=tmp_path, train_samples=synth_small[0],
                    test_samples=synth_small[1], runner=runner)
    assert len(calls) == 9

    table = result.table.set_index("config")
    assert table.loc["CGM(a)", "IOU"] == 20.0  # median of 10, 20, 60
    assert table.loc["CGM(b)", "status"].startswith("failed")
    assert pd.isna(table.loc["CGM(b)", "IOU"])
    assert table.loc["CGM(c)", "status"] == "ok"

    failed = result.series[result.series["config"] == "CGM(b)"]
    assert len(failed) == 3 and failed["status"].str.contains("DivergenceError").all()

    payload = json.loads(result.files["json"].read_text())
    assert payload["CGM(b)"]["IOU"] is None


@pytest.mark.parametrize("exc", [KeyError("missing"), ZeroDivisionError("division by zero"), AssertionError("bad")])
def test_unexpected_exceptions_are_recorded_too(exc, tiny_run, synth_small, tmp_path):
    def runner(cfg, train_samples, test_samples):
        if cfg.network.cgm_variant.value == "a" and cfg.seed == 2:
            raise exc
        return TrainResult(net=None, history=[], report=_report(0.1 * cfg.seed))

    grid = AblationGrid("odd", [
        GridEntry("CGM(a)", {"network.cgm_variant": "a"}),
        GridEntry("CGM(c)", {"network.cgm_variant": "c"}),
    ])
    result = ablate(grid, tiny_run, seeds=[1, 2], out_dir=tmp_path, train_samples=synth_small[0],
                    test_samples=synth_small[1], runner=runner)

    series = result.series.set_index(["config", "seed"])
    assert series.loc[("CGM(a)", 2), "status"].startswith(f"failed: {type(exc).__name__}")
    assert series.loc[("CGM(a)", 1), "status"] == "ok"
    assert (series.loc["CGM(c)", "status"] == "ok").all()
    table = result.table.set_index("config")
    assert table.loc["CGM(a)", "status"] == "ok"
    assert result.files["series"].exists()


def test_each_seed_sets_run_and_weight_seed(tiny_run, synth_small, tmp_path):
    seen = []

    def runner(cfg, train_samples, test_samples):
        seen.append((cfg.seed, cfg.network.seed, cfg.output_dir.name))
        return TrainResult(net=None, history=[], report=_report(0.5))

    ablate(AblationGrid("s", [GridEntry("x", {})]), tiny_run, [3, 4], tmp_path, *synth_small, runner=runner)
    assert seen == [(3, 3, "seed3"), (4, 4, "seed4")]


def test_median_report():
    m = median_report([_report(0.2), _report(0.9), _report(0.4)])
    assert m.iou == 0.4 and m.mode == "macro"
    with pytest.raises(ConfigurationError):
        ablate(AblationGrid("s", [GridEntry("x", {})]), RunConfig(), seeds=[])

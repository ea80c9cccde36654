from __future__ import annotations

import pytest
import torch

from app.core.config import NetworkConfig, RunConfig, SyntheticSource
from app.data.synth import synth_generate


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """Audit trail and run outputs go to the test's temporary directory."""
    monkeypatch.setenv("AUDIT_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("DTNET_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.delenv("DTNET_CHECKPOINT", raising=False)
    monkeypatch.delenv("DTNET_NUM_THREADS", raising=False)
    monkeypatch.setenv("DTNET_DEVICE", "cpu")


@pytest.fixture
def rng():
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def tiny_baseline() -> NetworkConfig:
    return NetworkConfig.baseline(base_width=2)


@pytest.fixture
def tiny_dtnet() -> NetworkConfig:
    return NetworkConfig.dtnet(base_width=2)


@pytest.fixture(scope="session")
def synth_small():
    """Six 32x32 synthetic samples: four to train on, two to test."""
    samples = synth_generate(6, 32, seed=7)
    return samples[:4], samples[4:]


@pytest.fixture
def tiny_run(tmp_path, tiny_dtnet) -> RunConfig:
    return RunConfig(
        network=tiny_dtnet,
        data=SyntheticSource(n_train=4, n_test=2, size=32, seed=3),
        batch_size=2,
        epochs=2,
        output_dir=tmp_path / "run",
        seed=5,
    )

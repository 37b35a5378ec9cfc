from pathlib import Path

import numpy as np
import pytest

from fedhet import load_config
from fedhet.config import ExperimentConfig, ExperimentSection

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def desk_config(protocol: str = "dlsh", seed: int = 0, **sections) -> ExperimentConfig:
    """The 5-client NIID-1 desk setup from ``configs/``, with overrides."""
    base = load_config(CONFIGS / "desk_niid1_dlsh.ini")
    experiment = {"protocol": protocol, "master_seed": seed, **sections.pop("experiment", {})}
    return base.with_(experiment=experiment, **sections)


def small_config(protocol: str = "dlsh", seed: int = 0, **sections) -> ExperimentConfig:
    """A fast, tiny run for structural checks (transcripts, determinism)."""
    cfg = ExperimentConfig(experiment=ExperimentSection(protocol=protocol))
    defaults = dict(
        dataset={"n_per_class": 60, "feature_dim": 16, "spread": 2.0},
        scheme={"kind": "NIID1", "n_clients": 3, "samples_per_client": 60},
        client_model={"hidden": 8},
        global_model={"hidden": 8},
        local={"epochs": 2, "learning_rate": 0.05},
        embed={"epochs": 2, "learning_rate": 0.05},
        global_train={"epochs": 2, "learning_rate": 0.05},
        incentive={"epochs": 2, "learning_rate": 0.05},
    )
    experiment = {"master_seed": seed, "rounds": 2, **sections.pop("experiment", {})}
    for name, values in sections.items():
        defaults[name] = {**defaults.get(name, {}), **values}
    return cfg.with_(experiment=experiment, **defaults)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)

import time

import numpy as np
import pytest

from ocdeepiv import cli, reports, simkit
from ocdeepiv.config import ExperimentConfig, parse_config

SMALL_CONFIG = """
[dgp]
n = 200
seed = 3

[train]
epochs = 4
switch_epoch = 2
seed = 3

[experiment]
plot = false
"""

TIMINGS: dict[str, list[float]] = {}
# acceptance verdicts, echoed in the terminal summary so they land in the test log
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    return parse_config(SMALL_CONFIG)


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    """Two CLI ``train`` runs with the default configuration (seed 0)."""
    dirs = []
    for name in ("run_a", "run_b"):
        out = tmp_path_factory.mktemp(name)
        start = time.perf_counter()
        cli.cmd_train(ExperimentConfig(), out)
        TIMINGS.setdefault("default_train", []).append(time.perf_counter() - start)
        dirs.append(out)
    return dirs


@pytest.fixture(scope="session")
def default_losses(default_runs):
    return reports.read_losses_csv(default_runs[0] / "losses.csv")


@pytest.fixture(scope="session")
def default_theta(default_runs):
    return reports.read_theta_csv(default_runs[0] / "theta.csv")


@pytest.fixture(scope="session")
def confounded_het():
    return simkit.gen_confounded(simkit.DGPSpec(kind="confounded", n=10000, seed=0))


@pytest.fixture(scope="session")
def confounded_const_big():
    return simkit.gen_confounded(
        simkit.DGPSpec(kind="confounded", n=100_000, seed=1, constant_effect=1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from fbsched.neural import gen_dataset, paper_costs, paper_ranges
from fbsched.neural.lm import train_lm
from fbsched.scenario import load_scenario

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def paper_scenario():
    return load_scenario()


@pytest.fixture(scope="session")
def paper_dataset():
    return gen_dataset(paper_ranges(), paper_costs())


@pytest.fixture(scope="session")
def paper_model(paper_scenario, paper_dataset):
    """M=8 network trained on the full grid with the scenario's LM settings."""
    return train_lm(paper_dataset, paper_scenario.hidden, paper_scenario.lm_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

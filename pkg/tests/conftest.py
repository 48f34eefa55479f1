import sys
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bibolab.dataset import Dataset, clean_dataset  # noqa: E402
from bibolab.scenario import RssiModel, default_network, simulate_scenario  # noqa: E402


@pytest.fixture(scope="session")
def small_net():
    return replace(default_network(), duration_s=600.0)


@pytest.fixture(scope="session")
def small_points(small_net):
    return simulate_scenario(small_net, RssiModel(), 4, 11)


@pytest.fixture(scope="session")
def small_dataset(small_points):
    return Dataset.from_points(small_points)


@pytest.fixture(scope="session")
def small_clean(small_dataset):
    return clean_dataset(small_dataset)


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])

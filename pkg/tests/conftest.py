import dataclasses

import pytest

from harvest_assoc.energy import SbsConfig
from harvest_assoc.scenario import load_scenario, shipped_path
from harvest_assoc.sim import SimConfig


@pytest.fixture(scope="session")
def table1():
    return load_scenario(shipped_path("table1"))


@pytest.fixture
def short_table1(table1):
    return dataclasses.replace(table1, trials=1500, replications=1)


@pytest.fixture
def starved():
    """Cells that harvest little and see heavy background load, so denials happen."""
    sbs = [SbsConfig(1, 4.0, (0.5,), 2, 6.0, 1.5), SbsConfig(2, 3.0, (0.4,), 3, 4.0, 2.0)]
    return SimConfig(sbs, [[1.0, 0.8], [0.6, 1.2]], [[1.0, 1.0], [1.0, 1.0]], 1.0, (0.2, 0.1), (0.3, 0.3),
                     policy="random", trials=800, seed=3, service_time=0.05)


_ACCEPTANCE: list = []


@pytest.fixture
def acceptance_results():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)

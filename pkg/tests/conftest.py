import numpy as np
import pytest
from hypothesis import settings

from linksel.topology import Topology, random_topology

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def line3():
    return Topology.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def five_node():
    # node 3 (index 2) links to nodes 2 and 5 (indices 1 and 4)
    return Topology.from_edges(5, [(0, 1), (1, 2), (2, 4), (3, 4), (0, 3)])


@pytest.fixture
def small_graph():
    return random_topology(8, 3.0, np.random.default_rng(5))


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line that is echoed in the terminal summary."""
    lines = request.config.stash[ACCEPTANCE]

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

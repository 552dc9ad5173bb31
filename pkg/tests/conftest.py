import numpy as np
import pytest

from metricflow import build_space, parse_integrand
from metricflow.corpus import random_graph

ALL_SPECS = ["p:1.5", "p:2", "p:3", "qp:1.5,3", "1p:2"]


@pytest.fixture
def pair():
    return build_space([("a", 1.0), ("b", 1.0)], [("a", "b", 1.0)])


@pytest.fixture
def triangle():
    return build_space([("a", 1), ("b", 1), ("c", 1)], [("a", "b", 1), ("b", "c", 1), ("c", "a", 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=ALL_SPECS)
def integrand(request):
    return parse_integrand(request.param)


@pytest.fixture
def graphs():
    return [random_graph(n, seed) for n, seed in [(2, 1), (3, 2), (4, 3), (5, 4), (6, 5), (6, 6)]]


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one pass/fail line per acceptance criterion; printed at the end of the run."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

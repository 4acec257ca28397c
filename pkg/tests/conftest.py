import numpy as np
import pytest

from driftrelax.sampler import ConditionalProblem
from driftrelax.sde import double_well, scaled_well, zero_drift

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def well_problem():
    """Double-well transition from -1 to an observation at +1, modified drift alpha=0.1."""
    return ConditionalProblem(-1.0, 1.0, 0.01, scaled_well(0.1), double_well(), 100, 0.01)


@pytest.fixture
def flat_problem():
    """Zero drift, sigma 1/2, x0=0 observed at z=1: the conjugate-Gaussian case."""
    return ConditionalProblem(0.0, 1.0, 0.01, zero_drift(0.5), zero_drift(0.5), 100, 0.01)

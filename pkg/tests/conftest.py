import numpy as np
import pytest

from alphaneck.domain import build_torus_grid, MapField
from alphaneck.manifold import UnitSphere


@pytest.fixture
def sphere():
    return UnitSphere(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sphere_field(grid, rng, smooth=False):
    S = UnitSphere(3)
    v = rng.normal(size=grid.shape + (3,))
    if smooth:
        for ax in range(2):
            v = 0.5 * v + 0.25 * (np.roll(v, 1, ax) + np.roll(v, -1, ax))
    return MapField(grid, S.project(v), S)


@pytest.fixture(scope="session")
def torus_run():
    """The degree-1 n=256 continuation shared by the slow tests (~15 s)."""
    from alphaneck.solver import (ContinuationSchedule, SolveOptions, continuation_run,
                                  initial_degree_one_map)
    grid = build_torus_grid(256, 1.0)
    u0 = initial_degree_one_map(grid)
    sched = ContinuationSchedule([1.2, 1.1, 1.05, 1.03, 1.02], 1.0, SolveOptions())
    return u0, continuation_run(u0, sched)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from burgers_lab.field import SpatialGrid, forced_potential, zero_potential


@pytest.fixture(scope="session")
def forced():
    return forced_potential()


@pytest.fixture(scope="session")
def zero():
    return zero_potential()


@pytest.fixture(scope="session")
def grid256():
    return SpatialGrid(256)


@pytest.fixture(scope="session")
def periodic_inviscid(forced, grid256):
    from burgers_lab.periodic import inviscid_periodic

    return inviscid_periodic(grid256, forced, 50)


@pytest.fixture(scope="session")
def sin_run(zero, grid256):
    from burgers_lab.inviscid import solve_inviscid

    return solve_inviscid(grid256.sample(np.sin), zero, 3.0, dt_out=0.05)


# (criterion number, line) pairs filled in by test_acceptance
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

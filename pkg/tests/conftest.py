import math

import pytest
from hypothesis import HealthCheck, settings

from expnls.grid import make_grid
from expnls.model import ModelParams
from expnls.profile import SolverConfig, shoot_profile

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile("default")


def solve(omega=1.0, mu=0, width=20.0, n=2048, min_width=8.0):
    grid = make_grid(width / math.sqrt(omega), n)
    return shoot_profile(ModelParams(omega, mu), grid, SolverConfig(min_width=min_width))


@pytest.fixture(scope="session")
def sol10():
    """ω=1, μ=0 on r ≤ 20 with n=8192."""
    return solve(1.0, 0, n=8192)


@pytest.fixture(scope="session")
def sol11():
    return solve(1.0, 1, n=8192)


@pytest.fixture(scope="session")
def spec10():
    """Spectral-width grid, r ≤ 10."""
    return solve(1.0, 0, width=10.0, n=2048)


@pytest.fixture(scope="session")
def spec11():
    return solve(1.0, 1, width=10.0, n=2048)


@pytest.fixture(scope="session")
def spec10_fine():
    return solve(1.0, 0, width=10.0, n=8192)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)

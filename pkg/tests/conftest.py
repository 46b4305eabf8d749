import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kglab import CriticalPower, certified_exp2d, make_grid, shoot

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

M3 = math.sqrt(3.0) / 4.0 * math.pi ** 2  # J(W) in three dimensions


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record ``criterion N: PASS/FAIL detail`` lines for the terminal summary."""
    def log(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok
    return log


@pytest.fixture(scope="session")
def critical3():
    return CriticalPower(3)


@pytest.fixture(scope="session")
def gs3(critical3):
    return shoot(critical3, 0.0, make_grid(3, 8192, 20.0))


@pytest.fixture(scope="session")
def exp2d():
    model, tm = certified_exp2d(lam=0.005, kappa0=5.0)
    return model, tm


@pytest.fixture(scope="session")
def gs_exp2d(exp2d):
    model, _ = exp2d
    return shoot(model, model.c, make_grid(2, 4001, 20.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

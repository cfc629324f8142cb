import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from optstab.hjb import GridSpec, max_stable_dt, solve_evolutive, solve_stationary  # noqa: E402
from optstab.objectives import make_benchmark  # noqa: E402

SQRT6 = math.sqrt(6.0)


@pytest.fixture(scope="session")
def double_well():
    return make_benchmark("double_well_1d")


@pytest.fixture(scope="session")
def constant():
    return make_benchmark("constant", {"c": 1.0})


@pytest.fixture(scope="session")
def dw_stationary(double_well):
    """lam = 0.1, h = 0.005, marched to residual 1e-6."""
    grid = GridSpec.for_objective(double_well, 0.005)
    return solve_stationary(double_well, 0.1, grid, max_stable_dt(double_well, grid, 0.1), 1e-6)


@pytest.fixture(scope="session")
def dw_evolutive(double_well):
    """lam = 0.1, h = 0.005, T = 20."""
    grid = GridSpec.for_objective(double_well, 0.005)
    return solve_evolutive(double_well, 0.1, grid, 20.0, 0.002)


@pytest.fixture(scope="session")
def dw_evolutive_fine(double_well):
    """Certification-grade field: lam = 0.1, h = 0.000625, T = 20."""
    grid = GridSpec.for_objective(double_well, 0.000625)
    return solve_evolutive(double_well, 0.1, grid, 20.0, 0.00025)


@pytest.fixture(scope="session")
def dw_stationary_fine(double_well):
    grid = GridSpec.for_objective(double_well, 0.000625)
    return solve_stationary(double_well, 0.1, grid, max_stable_dt(double_well, grid, 0.1), 1e-6)


ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, passed: bool, detail: str, seconds: float | None = None):
    """Store and print one verdict line per acceptance criterion."""
    timing = "" if seconds is None else f" [{seconds:.2f} s]"
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}{timing}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])

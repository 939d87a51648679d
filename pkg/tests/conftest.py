import numpy as np
import pytest

from harnack_lab import Grid, KernelSpec, poisson_matched

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def small_grid():
    return Grid(8.0, 81)


@pytest.fixture
def unit_kernel():
    return KernelSpec(0.5)


@pytest.fixture
def pm_kernel():
    return poisson_matched()


ALL_FAMILIES = [
    KernelSpec(0.5),
    KernelSpec(0.3, 1.0, 2.0, "checkerboard", {"cell": 0.7, "time_cell": 0.3}),
    KernelSpec(0.7, 1.0, 3.0, "time_oscillating", {"omega": 5.0}),
    KernelSpec(0.5, 1.0, 2.0, "custom_table",
               {"cell": 1.0, "values": [[1.0, 2.0], [2.0, 1.5]], "default": 1.0}),
]


@pytest.fixture(params=ALL_FAMILIES, ids=lambda k: k.family)
def any_kernel(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

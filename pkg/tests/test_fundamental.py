import numpy as np
import pytest

from harnack_lab import Grid, InputError, KernelSpec, poisson_matched
from harnack_lab.evolution import T_INIT
from harnack_lab.fundamental import (check_chapman_kolmogorov, check_duality, check_envelope,
                                     check_nonnegative_mass, compute_table)
from harnack_lab.oracles import poisson_kernel

TIMES = [0.5, 1.0]


@pytest.fixture(scope="module")
def grid():
    return Grid(20.0, 201)


@pytest.fixture(scope="module")
def frac_tables(grid):
    spec = KernelSpec(0.5)
    return (compute_table(spec, grid, 0.0, TIMES, 0.01),
            compute_table(spec, grid, 0.0, TIMES, 0.01, dual=True))


@pytest.fixture(scope="module")
def osc_tables(grid):
    spec = KernelSpec(0.5, 1.0, 2.0, "time_oscillating", {"omega": 6.0})
    return (compute_table(spec, grid, 0.0, TIMES, 0.01),
            compute_table(spec, grid, 0.0, TIMES, 0.01, dual=True))


def test_sign_and_mass(frac_tables, osc_tables):
    for table in frac_tables[:1] + osc_tables[:1]:
        rep = check_nonnegative_mass(table)
        assert rep["nonnegative"] and rep["mass_le_1"] and rep["mass_nonincreasing"]


def test_symmetric_in_space(frac_tables):
    P = frac_tables[0].density(0.0, 1.0)
    assert np.allclose(P, P.T, rtol=1e-10, atol=1e-14)


def test_chapman_kolmogorov(frac_tables, osc_tables):
    assert check_chapman_kolmogorov(frac_tables[0], 0.0, 0.5, 1.0)["max_rel_err"] <= 0.02
    assert check_chapman_kolmogorov(osc_tables[0], 0.0, 0.5, 1.0)["max_rel_err"] <= 0.03


def test_degenerate_composition(frac_tables):
    rep = check_chapman_kolmogorov(frac_tables[0], 0.0, 0.0, 1.0)
    assert rep["max_rel_err"] <= 1e-12


def test_duality(frac_tables, osc_tables):
    assert check_duality(*frac_tables)["max_rel_err"] <= 0.02
    assert check_duality(*osc_tables)["max_rel_err"] <= 0.03


def test_poisson_column():
    g = Grid(40.0, 801)
    table = compute_table(poisson_matched(), g, 0.0, [0.5], 1e-3, sources=[g.center])
    col = table.column(0.5, g.center)
    m = np.abs(g.x) <= 20
    # the discrete delta has width h, so compare against P at t + t_init
    p = poisson_kernel(0.5 + T_INIT, g.x[m])
    assert np.max(np.abs(col[m] - p)) / np.max(p) <= 0.05


def test_envelope_reports_constant():
    g = Grid(20.0, 201)
    table = compute_table(poisson_matched(), g, 0.0, [0.5, 1.0, 2.0], 0.01)
    rep = check_envelope(table, C=10.0)
    assert rep["holds_upper"] and rep["holds_lower"]
    assert 1.0 <= rep["scale_free_C"] <= rep["measured_C"]
    cb = compute_table(KernelSpec(0.5, 1.0, 2.0, "checkerboard"), g, 0.0, [0.5, 1.0], 0.01)
    assert np.isfinite(check_envelope(cb)["measured_C"])


def test_errors(grid):
    with pytest.raises(InputError):
        compute_table(KernelSpec(0.5), grid, 1.0, [0.5], 0.01)
    with pytest.raises(InputError):
        compute_table(KernelSpec(0.5), grid.with_policy("dirichlet_data"), 0.0, [0.5], 0.01)
    with pytest.raises(InputError):
        compute_table(KernelSpec(0.5), grid, 0.0, [0.5], 0.01, sources=[grid.n])


def test_table_csv():
    g = Grid(4.0, 17)
    table = compute_table(KernelSpec(0.5), g, 0.0, [0.1], 0.05, sources=[8])
    lines = table.to_csv().splitlines()
    assert lines[0] == "t,x,y,p" and len(lines) == 1 + 17

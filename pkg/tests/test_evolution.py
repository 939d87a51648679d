import numpy as np
import pytest

from harnack_lab import (ExteriorData, Grid, InputError, KernelSpec, bump, poisson_matched,
                         rescale, solve_cauchy, solve_dual, solve_local)
from harnack_lab.evolution import T_INIT
from harnack_lab.oracles import oracle_field, poisson_kernel


@pytest.fixture(scope="module")
def poisson_run():
    g = Grid(40.0, 1601)
    return solve_cauchy(poisson_matched(), g, bump(g), 0.5, 1e-3, save_every=50)


def test_constants_are_solutions(any_kernel):
    g = Grid(8.0, 81, "truncated_global", "constant")
    fld = solve_cauchy(any_kernel, g, np.ones(g.n), 0.2, 0.01)
    assert np.max(np.abs(fld.frames - 1)) <= 1e-10


def test_bump_matches_poisson(poisson_run):
    g = poisson_run.grid
    m = np.abs(g.x) <= 20
    p = poisson_kernel(0.5 + T_INIT, g.x[m])
    err = np.max(np.abs(poisson_run.frame(0.5)[m] - p)) / np.max(p)
    assert err <= 0.05


def test_positivity_and_monotone_norms(any_kernel, rng):
    g = Grid(8.0, 81)
    fld = solve_cauchy(any_kernel, g, rng.uniform(0, 1, g.n), 0.5, 0.01)
    assert np.all(fld.frames >= 0)
    mass = fld.frames.sum(axis=1)
    l2 = (fld.frames ** 2).sum(axis=1)
    assert np.all(np.diff(mass) <= 1e-12) and np.all(np.diff(l2) <= 1e-12)


@pytest.mark.parametrize("trial", range(10))
def test_comparison_principle(trial):
    rng = np.random.default_rng(trial)
    g = Grid(6.0, 61, "dirichlet_data")
    spec = KernelSpec(0.5, 1.0, 2.0, "checkerboard", {"cell": 0.8})
    f = rng.uniform(0, 1, g.n)
    lo, hi = sorted(rng.uniform(0, 2, 2))
    u1 = solve_local(spec, g, f, ExteriorData.constant(lo), 0.0, 0.2, 0.02)
    u2 = solve_local(spec, g, f, ExteriorData.constant(hi), 0.0, 0.2, 0.02)
    assert np.all(u1.frames <= u2.frames + 1e-13)


def test_zero_data_stays_zero():
    g = Grid(6.0, 61, "dirichlet_data")
    fld = solve_local(KernelSpec(0.5), g, np.zeros(g.n), ExteriorData.constant(0.0), 0.0, 0.1, 0.01)
    assert np.all(fld.frames == 0)


def test_jump_exterior_waits_then_fills():
    g = Grid(16.0, 321, "dirichlet_data")
    fld = solve_local(KernelSpec(0.5), g, np.zeros(g.n), ExteriorData.step_in_time(0.0),
                      -16.0, 0.5, 0.05)
    before = fld.times <= 1e-12
    assert np.all(fld.frames[before] == 0)
    assert np.all(fld.frames[~before] > 0)


def test_dual_is_reversed_cauchy():
    g = Grid(8.0, 81)
    spec = KernelSpec(0.5)
    f = 1.0 / (1 + np.abs(g.x)) ** 2
    fw = solve_cauchy(spec, g, f, 1.0, 0.05)
    bw = solve_dual(spec, g, f, 1.0, 0.05)
    assert np.allclose(bw.frames[::-1], fw.frames, rtol=1e-13, atol=1e-15)
    assert np.all(bw.frames > 0)


def test_rescale_identity_and_relabeling(poisson_run):
    same = rescale(poisson_run, 1.0, grid=poisson_run.grid, times=poisson_run.times)
    assert np.allclose(same.frames, poisson_run.frames, rtol=0, atol=1e-14)
    lab = rescale(poisson_run, 4.0)
    assert lab.grid.L == pytest.approx(10.0)
    assert np.array_equal(lab.frames, poisson_run.frames)


def test_rescale_matches_oracle():
    g = Grid(20.0, 801)
    times = np.linspace(0.5, 2.0, 31)
    fld = oracle_field("poisson_half", g, times, t0=0.0)
    tau = 0.5
    sub = Grid(10.0, 401)
    v = rescale(fld, tau, grid=sub, times=np.linspace(1.0, 4.0, 13))
    exact = np.array([poisson_kernel(tau * t, tau * sub.x) for t in v.times])
    assert np.max(np.abs(v.frames - exact)) / np.max(exact) <= 0.01


def test_rescale_errors(poisson_run):
    with pytest.raises(InputError):
        rescale(poisson_run, -1.0)
    with pytest.raises(InputError):
        rescale(poisson_run, 2.0, grid=poisson_run.grid, times=poisson_run.times)


def test_dt_halving_is_small():
    g = Grid(20.0, 401)
    spec = poisson_matched()
    a = solve_cauchy(spec, g, bump(g), 0.5, 0.01, save_every=50)
    b = solve_cauchy(spec, g, bump(g), 0.5, 0.005, save_every=100)
    rel = np.max(np.abs(a.frame(0.5) - b.frame(0.5))) / np.max(b.frame(0.5))
    assert rel < 0.02


def test_input_errors():
    g = Grid(8.0, 81)
    with pytest.raises(InputError):
        solve_cauchy(KernelSpec(0.5), g, np.zeros(5), 1.0, 0.1)
    with pytest.raises(InputError):
        solve_cauchy(KernelSpec(0.5), g, np.zeros(g.n), 1.0, 0.3)
    with pytest.raises(InputError):
        solve_local(KernelSpec(0.5), g, np.zeros(g.n), ExteriorData.constant(0), 0, 1, 0.1)
    with pytest.raises(InputError):
        solve_cauchy(KernelSpec(0.5), g.with_policy("dirichlet_data"), np.zeros(g.n), 1, 0.1)


def test_field_csv_and_frames():
    g = Grid(8.0, 17)
    fld = solve_cauchy(KernelSpec(0.5), g, bump(g), 0.2, 0.1)
    lines = fld.to_csv().splitlines()
    assert lines[0] == "t,x,u" and len(lines) == 1 + 3 * 17
    with pytest.raises(InputError):
        fld.frame(0.35)
    assert list(fld.window(0.0, 0.2)) == [1, 2]

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from harnack_lab import ExteriorData, Grid, InputError, KernelSpec, apply, assemble
from harnack_lab.discretization import assemble_weights, exterior_mass


def _frac_tail(x, L, s):
    # closed form of int_{|y|>L} |x-y|^{-1-2s} dy
    return ((L - x) ** (-2 * s) + (L + x) ** (-2 * s)) / (2 * s)


def test_grid_invariants():
    g = Grid(8.0, 81)
    assert g.h == pytest.approx(16 / 81)
    assert g.x[0] == pytest.approx(-8 + g.h / 2)
    assert g.x[g.center] == pytest.approx(0.0, abs=1e-14)
    for bad in (dict(L=8.0, n=80), dict(L=8.0, n=15), dict(L=-1.0, n=81),
                dict(L=8.0, n=81, ext_policy="periodic")):
        with pytest.raises(InputError):
            Grid(**bad)
    assert Grid.from_json(g.to_json()) == g
    assert json.loads(g.to_json())["n"] == 81


@pytest.mark.parametrize("policy,closure", [("zero_exterior", "matched_decay"),
                                            ("truncated_global", "constant"),
                                            ("dirichlet_data", "matched_decay")])
def test_constants_are_harmonic(any_kernel, policy, closure):
    g = Grid(8.0, 81, policy, closure)
    op = assemble(any_kernel, g, 0.3)
    out = apply(op, np.ones(g.n), exterior=1.0)
    assert np.max(np.abs(out)) <= 1e-10 * max(1.0, np.max(op.tail))


def test_truncated_global_constant_closure_needs_no_exterior(any_kernel):
    g = Grid(8.0, 81, "truncated_global", "constant")
    op = assemble(any_kernel, g, 0.0)
    assert np.max(np.abs(apply(op, np.full(g.n, 2.5)))) <= 1e-10 * np.max(op.tail)


def test_weights_symmetric_and_scaled():
    g = Grid(10.0, 201)
    W = assemble_weights(KernelSpec(0.5), g, 0.0)
    assert np.array_equal(W, W.T)
    assert np.all(np.isfinite(W)) and np.all(W >= 0) and np.all(np.diag(W) == 0)
    i, j = np.nonzero(np.abs(np.subtract.outer(np.arange(g.n), np.arange(g.n))) >= 2)
    scaled = W[i, j] * (g.x[i] - g.x[j]) ** 2 / g.h
    assert scaled.min() >= 0.95 and scaled.max() <= 1.05


def test_checkerboard_weights_within_window():
    g = Grid(6.0, 61)
    spec = KernelSpec(0.5, 1.0, 2.0, "checkerboard", {"cell": 0.9})
    W = assemble_weights(spec, g, 0.2)
    i, j = np.nonzero(np.abs(np.subtract.outer(np.arange(g.n), np.arange(g.n))) >= 2)
    scaled = W[i, j] * (g.x[i] - g.x[j]) ** 2 / g.h
    assert scaled.min() >= 0.95 and scaled.max() <= 2 * 1.05


def test_odd_function_vanishes_at_center():
    g = Grid(8.0, 81, "truncated_global", "matched_decay")
    op = assemble(KernelSpec(0.5), g, 0.0)
    out = apply(op, g.x.copy())
    assert abs(out[g.center]) <= 1e-12
    assert np.allclose(out, -out[::-1], atol=1e-12)


def test_apply_zero_and_linearity(rng):
    g = Grid(8.0, 81)
    op = assemble(KernelSpec(0.4, 1.0, 2.0, "checkerboard"), g, 0.0)
    assert np.all(apply(op, np.zeros(g.n)) == 0)
    u, v = rng.normal(size=g.n), rng.normal(size=g.n)
    a, b = 1.7, -0.3
    lhs = apply(op, a * u + b * v)
    rhs = a * apply(op, u) + b * apply(op, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))
    with pytest.raises(InputError):
        apply(op, np.zeros(g.n + 1))


def _generator_oracle(u, x):
    # (-L u)(x) = int_0^inf (2u(x) - u(x+r) - u(x-r)) r^{-2} dr for a == 1, s = 1/2
    f = lambda r: (2 * u(x) - u(x + r) - u(x - r)) / r ** 2
    return sum(quad(f, a, b, limit=200, epsabs=1e-12)[0] for a, b in ((0, 0.1), (0.1, 5), (5, np.inf)))


def test_generator_matches_quadrature():
    g = Grid(40.0, 1601)
    op = assemble(KernelSpec(0.5), g, 0.0)
    sigma = 0.25
    u = lambda x: np.exp(-x ** 2 / (2 * sigma ** 2))
    Au = apply(op, u(g.x))
    nodes = g.center + np.arange(-10, 11, 2)
    exact = np.array([_generator_oracle(u, g.x[i]) for i in nodes])
    err = np.max(np.abs(Au[nodes] - exact)) / np.max(np.abs(exact))
    assert err <= 0.03


def test_step_matrix_is_m_matrix(any_kernel):
    g = Grid(8.0, 81)
    M = np.eye(g.n) + 0.01 * assemble(any_kernel, g, 0.1).matrix()
    off = M - np.diag(np.diag(M))
    assert np.all(off <= 0)
    assert np.all(np.diag(M) > -off.sum(axis=1))
    assert np.all(np.linalg.inv(M) >= -1e-14)


def test_zero_exterior_tail_closed_form():
    g = Grid(8.0, 81)
    tail = assemble(KernelSpec(0.5), g, 0.0).tail
    assert np.allclose(tail, _frac_tail(g.x, g.L, 0.5), rtol=1e-8)


def test_exterior_mass_matches_tail():
    g = Grid(8.0, 81)
    spec = KernelSpec(0.5, 1.0, 2.0, "time_oscillating")
    left, right = exterior_mass(spec, g, 0.3)
    assert np.allclose(left + right, assemble(spec, g, 0.3).tail, rtol=1e-10)


def test_dirichlet_load_constant_exterior():
    g = Grid(8.0, 81, "dirichlet_data")
    op = assemble(KernelSpec(0.5), g, 0.5, ExteriorData.constant(2.0))
    assert np.allclose(op.exterior_load, 2.0 * op.tail, rtol=1e-12)
    with pytest.raises(InputError):
        assemble(KernelSpec(0.5), Grid(8.0, 81), 0.0, ExteriorData.constant(1.0))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=81, max_size=81))
def test_energy_is_nonnegative(u):
    g = Grid(8.0, 81)
    op = assemble(KernelSpec(0.5, 1.0, 2.0, "checkerboard"), g, 0.0)
    u = np.asarray(u)
    assert g.h * u @ apply(op, u) >= -1e-9 * (1 + u @ u)


def test_weights_csv():
    g = Grid(8.0, 17)
    text = assemble(KernelSpec(0.5), g, 0.0).to_csv()
    lines = text.splitlines()
    assert lines[0] == "i,j,w" and len(lines) == 1 + 17 * 16

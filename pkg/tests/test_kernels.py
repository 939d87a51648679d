import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab import DomainError, InputError, KernelSpec, SamplePlan, evaluate, poisson_matched
from harnack_lab.kernels import default_sample_plan, verify_bounds, verify_ujs

from conftest import ALL_FAMILIES

coord = st.floats(-50, 50, allow_nan=False)


def test_frac_laplacian_direct_formula():
    assert evaluate(KernelSpec(0.5), 0.0, 0.0, 2.0) == 0.25


def test_diagonal_is_a_domain_error():
    with pytest.raises(DomainError):
        evaluate(KernelSpec(0.5), 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        evaluate(KernelSpec(0.5), 0.0, np.array([0.0, 1.0]), np.array([2.0, 1.0]))


@pytest.mark.parametrize("spec", ALL_FAMILIES, ids=lambda k: k.family)
@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 5), x=coord, y=coord)
def test_symmetry_is_exact(spec, t, x, y):
    if abs(x - y) < 1e-9:
        return
    assert evaluate(spec, t, x, y) == evaluate(spec, t, y, x)


def test_symmetry_bulk(rng):
    t, x, y = rng.uniform(0, 3, 10_000), rng.uniform(-20, 20, 10_000), rng.uniform(-20, 20, 10_000)
    for spec in ALL_FAMILIES:
        assert np.array_equal(evaluate(spec, t, x, y), evaluate(spec, t, y, x))


def test_checkerboard_coefficient_takes_both_values():
    spec = KernelSpec(0.5, 1.0, 2.0, "checkerboard")
    g = np.linspace(-5.05, 5.05, 10)
    t, x, y = np.meshgrid(np.linspace(0, 2, 10), g, g + 0.013, indexing="ij")
    ratio = evaluate(spec, t.ravel(), x.ravel(), y.ravel()) * np.abs(x - y).ravel() ** 2
    assert set(np.round(ratio, 12)) == {1.0, 2.0}


@settings(max_examples=100, deadline=None)
@given(r=st.floats(1e-3, 1e3), x=coord, y=coord, s=st.floats(0.05, 0.95))
def test_frac_scaling(r, x, y, s):
    if abs(x - y) < 1e-6:
        return
    spec = KernelSpec(s)
    assert math.isclose(evaluate(spec, 0.0, r * x, r * y),
                        r ** (-1 - 2 * s) * evaluate(spec, 0.0, x, y), rel_tol=1e-12)


def test_verify_bounds_cases():
    rep = verify_bounds(KernelSpec(0.5))
    assert rep.min_ratio == pytest.approx(1.0, abs=1e-12) and rep.passed
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-12)
    rep = verify_bounds(KernelSpec(0.5, 1.0, 2.0, "checkerboard"))
    assert 1.0 - 1e-12 <= rep.min_ratio <= rep.max_ratio <= 2.0 + 1e-12 and rep.passed
    bad = KernelSpec(0.5, 1.0, 1.0, "custom_table", {"values": [[0.5]], "default": 0.5})
    assert verify_bounds(bad).passed is False
    assert verify_bounds(bad).to_dict()["pass"] is False


def test_convex_combination_stays_in_window(rng):
    a = KernelSpec(0.5, 1.0, 2.0, "checkerboard")
    b = KernelSpec(0.5, 1.0, 2.0, "time_oscillating")
    t, x, y = rng.uniform(0, 2, 500), rng.uniform(-5, 5, 500), rng.uniform(-5, 5, 500)
    th = rng.uniform(0, 1, 500)
    mix = (th * evaluate(a, t, x, y) + (1 - th) * evaluate(b, t, x, y)) * np.abs(x - y) ** 2
    assert mix.min() >= 1.0 - 1e-12 and mix.max() <= 2.0 + 1e-12


def _separated_samples(n, gap, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5, 5, n)
    y = x + rng.choice([-1, 1], n) * rng.uniform(gap, 4, n)
    return np.column_stack([rng.uniform(0, 2, n), x, y])


def test_ujs_frac_and_coarse_checkerboard():
    samples = _separated_samples(40, 1.0)
    rep = verify_ujs(KernelSpec(0.5), 0.2, samples)
    assert rep.passed and rep.worst_ratio <= 1.0
    cb = KernelSpec(0.5, 1.0, 2.0, "checkerboard", {"cell": 4.0})
    assert verify_ujs(cb, 0.2, samples).passed


def test_ujs_spike_fails():
    # one narrow cell pair carries Lam, the rest of the ball sees lam
    vals = np.full((27, 27), 0.1)
    vals[0, 26] = vals[26, 0] = 1.0
    spike = KernelSpec(0.5, 0.1, 1.0, "custom_table",
                       {"cell": 0.02, "origin": 0.98, "values": vals.tolist(), "default": 0.1})
    rep = verify_ujs(spike, 0.12, np.array([[0.0, 0.99, 1.5]]))
    assert rep.worst_ratio > 1.0 and rep.passed is False


def test_ujs_preconditions():
    with pytest.raises(InputError):
        verify_ujs(KernelSpec(0.5), 0.3, np.array([[0.0, 0.0, 1.0]]))
    with pytest.raises(InputError):
        verify_ujs(KernelSpec(0.5), 0.1, np.array([[0.0, 0.0, 1.0]]), nodes=32)


def test_validation_messages():
    with pytest.raises(InputError, match=r"s must lie in \(0,1\)"):
        KernelSpec(1.5)
    with pytest.raises(InputError):
        KernelSpec(0.5, 2.0, 1.0)
    with pytest.raises(InputError):
        KernelSpec(0.5, family="nope")
    with pytest.raises(InputError):
        KernelSpec(0.5, family="checkerboard", params={"omega": 1.0})
    with pytest.raises(InputError):
        KernelSpec(0.5, family="custom_table", params={"values": [[1.0, 2.0], [3.0, 1.0]]})


def test_json_round_trip():
    for spec in ALL_FAMILIES + [poisson_matched()]:
        again = KernelSpec.from_json(spec.to_json())
        assert again == spec
        assert set(json.loads(spec.to_json())) == {"s", "dim", "lambda", "Lambda", "family",
                                                   "params"}
    with pytest.raises(InputError):
        KernelSpec.from_dict({"s": 0.5, "lamda": 1.0})


def test_poisson_matched_normalization():
    pm = poisson_matched()
    assert math.isclose(evaluate(pm, 0.0, 0.0, 1.0), 1 / math.pi)


def test_state_keys_track_time_structure():
    osc = KernelSpec(0.5, 1.0, 2.0, "time_oscillating")
    assert osc.state_key(0.25) != osc.state_key(0.75)
    assert osc.state_key(0.25) == osc.state_key(1.25)
    cb = KernelSpec(0.5, 1.0, 2.0, "checkerboard", {"time_cell": 0.5})
    assert cb.state_key(0.1) != cb.state_key(0.6)
    assert KernelSpec(0.5).state_key(0.3) == KernelSpec(0.5).state_key(7.0)


def test_sample_plan():
    plan = default_sample_plan(100, seed=3)
    a, b = plan.draw(), plan.draw()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    logp = SamplePlan(1000, 1, {"u": (1e-3, 1e3)}, log=("u",))
    u = logp.draw()["u"]
    assert u.min() >= 1e-3 and u.max() <= 1e3
    assert np.median(np.log10(u)) == pytest.approx(0.0, abs=0.2)
    with pytest.raises(InputError):
        SamplePlan(0, 0, {"u": (0, 1)})
    with pytest.raises(InputError):
        SamplePlan(10, 0, {"u": (0, 1)}, log=("u",))
    with pytest.raises(InputError):
        SamplePlan(10, 0, {"u": (2, 1)})
    assert "v" in plan.with_ranges(v=(0, 1)).draw()

import math

import numpy as np
import pytest
from scipy.integrate import quad

from harnack_lab import DomainError, Grid, InputError
from harnack_lab.oracles import (evaluate_oracle, gaussian_kernel, harnack_quotient, hk_envelope,
                                 oracle_csv, oracle_field, poisson_kernel)


def test_poisson_value_and_domain():
    assert poisson_kernel(1.0, 0.0) == pytest.approx(1 / math.pi, rel=1e-15)
    with pytest.raises(DomainError):
        poisson_kernel(0.0, 1.0)
    with pytest.raises(DomainError):
        poisson_kernel(np.array([1.0, -1.0]), 0.0)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_poisson_unit_mass(t):
    m = quad(lambda x: poisson_kernel(t, x), -np.inf, np.inf, epsabs=1e-12, limit=200)[0]
    assert abs(m - 1) <= 1e-8


def test_poisson_semigroup():
    t, tau, x, y = 1.0, 1.0, 0.0, 3.0
    conv = quad(lambda z: poisson_kernel(t, x - z) * poisson_kernel(tau, z - y), -np.inf, np.inf,
                epsabs=1e-12, limit=400)[0]
    assert abs(conv - poisson_kernel(t + tau, x - y)) <= 1e-6


def test_gaussian():
    assert gaussian_kernel(1 / (4 * math.pi), 0.0) == pytest.approx(1.0, rel=1e-14)
    m = quad(lambda x: gaussian_kernel(0.7, x), -np.inf, np.inf, epsabs=1e-13)[0]
    assert abs(m - 1) <= 1e-10
    xs = np.linspace(-9, 9, 37)
    assert np.array_equal(gaussian_kernel(0.3, xs), gaussian_kernel(0.3, -xs))
    with pytest.raises(DomainError):
        gaussian_kernel(-1.0, 0.0)


def test_envelope():
    assert hk_envelope(1.0, 2.0, 0.5) == 0.25
    assert hk_envelope(1.0, 0.0, 0.5) == 1.0
    xs = np.linspace(-100, 100, 200_001)
    r = math.pi * poisson_kernel(1.0, xs) / hk_envelope(1.0, xs, 0.5)
    assert r.min() >= 0.5 - 1e-12 and r.max() <= 1.0 + 1e-12
    with pytest.raises(DomainError):
        hk_envelope(0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        hk_envelope(1.0, 1.0, 1.0)


def test_poisson_quotient_is_time_insensitive():
    for tau in (0.25, 0.5, 1.0, 2.0):
        for x0 in (0.0, 5.0, 20.0):
            assert harnack_quotient("poisson_half", tau, x0) < 50


def test_gaussian_contrast():
    d = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    g = [harnack_quotient("gaussian", 1.0, x) for x in d]
    assert all(b > a for a, b in zip(g, g[1:]))
    assert g[-1] > 100
    assert harnack_quotient("poisson_half", 1.0, 10.0) < 2


def test_oracle_dispatch_and_csv():
    with pytest.raises(InputError):
        evaluate_oracle("poisson_half", 1.0, 0.0, s=0.3)
    with pytest.raises(InputError):
        evaluate_oracle("bessel", 1.0, 0.0)
    assert evaluate_oracle("poisson_half", 0.5, 3.0, t0=0.5, x0=3.0) == poisson_kernel(1.0, 0.0)
    text = oracle_csv("envelope", [1.0], [0.0, 2.0])
    assert text.splitlines() == ["t,x,value", "1,0,1", "1,2,0.25"]


def test_oracle_field():
    g = Grid(5.0, 51)
    f = oracle_field("poisson_half", g, [0.5, 1.0])
    assert f.kernel.lam == pytest.approx(1 / math.pi)
    assert np.allclose(f.frames[1], poisson_kernel(1.0, g.x))

"""Closed-form reference kernels and the two-sided heat-kernel envelope."""
from __future__ import annotations

import io
import math

import numpy as np

from .exceptions import DomainError, InputError

ORACLE_KINDS = ("poisson_half", "gaussian", "envelope")


def _positive_time(t):
    t = np.asarray(t, float)
    if np.any(~(t > 0)):
        raise DomainError("t must be positive")
    return t


def _out(v):
    return v if np.ndim(v) else float(v)


def poisson_kernel(t, x, dim: int = 1):
    """(1/pi) t / (t^2 + x^2): heat kernel of the s = 1/2 generator."""
    if dim != 1:
        raise InputError("only dim = 1 is supported")
    t = _positive_time(t)
    x = np.asarray(x, float)
    return _out(t / (math.pi * (t * t + x * x)))


def gaussian_kernel(t, x, dim: int = 1):
    if dim != 1:
        raise InputError("only dim = 1 is supported")
    t = _positive_time(t)
    x = np.asarray(x, float)
    return _out(np.exp(-x * x / (4.0 * t)) / np.sqrt(4.0 * math.pi * t))


def hk_envelope(t, x, s: float, dim: int = 1):
    """min(t^(-d/2s), t / |x|^(d+2s)), equal to t^(-d/2s) at x = 0."""
    if not 0 < s < 1:
        raise DomainError("s must lie in (0,1)")
    t = _positive_time(t)
    ax = np.abs(np.asarray(x, float))
    near = t ** (-dim / (2.0 * s))
    with np.errstate(divide="ignore"):
        far = np.where(ax > 0, t / np.where(ax > 0, ax, 1.0) ** (dim + 2.0 * s), np.inf)
    return _out(np.minimum(near, far))


def evaluate_oracle(kind: str, t, x, s: float = 0.5, t0: float = 0.0, x0: float = 0.0):
    """Oracle ``kind`` at time t + t0 and position x - x0."""
    if kind == "poisson_half":
        if s != 0.5:
            raise InputError("poisson_half oracle requires s = 1/2")
        return poisson_kernel(np.asarray(t) + t0, np.asarray(x) - x0)
    if kind == "gaussian":
        return gaussian_kernel(np.asarray(t) + t0, np.asarray(x) - x0)
    if kind == "envelope":
        return hk_envelope(np.asarray(t) + t0, np.asarray(x) - x0, s)
    raise InputError(f"unknown oracle kind {kind!r}")


def oracle_field(kind: str, grid, times, kernel=None, t0: float = 0.0, x0: float = 0.0, dt=None):
    """Synthesize a SolutionField from an oracle (no solver involved)."""
    from .evolution import SolutionField
    from .kernels import KernelSpec, poisson_matched

    times = np.asarray(times, float)
    if kernel is None:
        kernel = poisson_matched() if kind == "poisson_half" else KernelSpec(s=0.5)
    frames = np.asarray(evaluate_oracle(kind, times[:, None], grid.x[None, :], kernel.s, t0, x0))
    if dt is None:
        dt = float(np.min(np.diff(times))) if len(times) > 1 else 1.0
    return SolutionField(grid, times, frames, "cauchy", kernel, dt,
                         {"oracle": kind, "t0": t0, "x0": x0})


def oracle_csv(kind: str, ts, xs, s: float = 0.5, t0: float = 0.0, x0: float = 0.0) -> str:
    """CSV with columns t, x, value."""
    buf = io.StringIO()
    buf.write("t,x,value\n")
    for t in np.atleast_1d(ts):
        vals = np.atleast_1d(evaluate_oracle(kind, t, np.asarray(xs), s, t0, x0))
        for x, v in zip(np.atleast_1d(xs), vals):
            buf.write(f"{t:.12g},{x:.12g},{v:.17g}\n")
    return buf.getvalue()


def harnack_quotient(kind: str, tau: float, x0: float, t0: float = 1.0, source: float = 0.0,
                     s: float = 0.5, samples: int = 401) -> float:
    """sup over (tau/4, tau] x B_r(x0) divided by inf over (3tau/4, tau] x B_r(x0).

    ``u(t, x)`` is the oracle at time t + t0 centred at ``source``; the radius
    is r = tau^(1/2s). Both extremes are taken over a dense sample lattice
    with the endpoints included.
    """
    r = tau ** (1.0 / (2 * s))
    xs = np.linspace(x0 - r, x0 + r, samples)
    t_sup = np.linspace(tau / 4, tau, samples)
    t_inf = np.linspace(3 * tau / 4, tau, samples)
    up = np.asarray(evaluate_oracle(kind, t_sup[:, None], xs[None, :], s, t0, source))
    lo = np.asarray(evaluate_oracle(kind, t_inf[:, None], xs[None, :], s, t0, source))
    return float(up.max() / lo.min())

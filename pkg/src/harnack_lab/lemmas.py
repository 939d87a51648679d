"""Randomized checks of the algebraic and integral inequalities used by the
regularity theory, plus the tail-weight quadrature."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .exceptions import InputError, NumericError
from .sampling import SamplePlan

ROUNDING = 1e-12


def default_algebraic_plan(count: int = 100_000, seed: int = 0) -> SamplePlan:
    return SamplePlan(count, seed, {"ux": (1e-3, 1e3), "uy": (1e-3, 1e3),
                                    "etax": (0.0, 2.0), "etay": (0.0, 2.0)},
                      log=("ux", "uy"))


def default_genaux_plan(count: int = 100_000, seed: int = 0) -> SamplePlan:
    return SamplePlan(count, seed, {"eta1": (0.0, 3.0), "eta2": (0.0, 3.0),
                                    "t": (1e-3, 1e3), "s": (1e-3, 1e3)}, log=("t", "s"))


def default_chain_plan(count: int = 100_000, seed: int = 0) -> SamplePlan:
    r = (-10.0, 10.0)
    return SamplePlan(count, seed, {k: r for k in ("phi1", "phi2", "u1", "u2", "xi1", "xi2")})


def _need(d, *names):
    missing = [n for n in names if n not in d]
    if missing:
        raise InputError(f"sample plan lacks ranges for {missing}")
    return [d[n] for n in names]


def algebraic_terms(eps, ux, uy, etax, etay):
    """(LHS, A, B) of the u^(-eps) testing inequality."""
    ux, uy = np.asarray(ux, float), np.asarray(uy, float)
    etax, etay = np.asarray(etax, float), np.asarray(etay, float)
    lhs = (uy - ux) * (etax ** 2 * ux ** (-eps) - etay ** 2 * uy ** (-eps))
    A = (etax * ux - etay * uy) ** 2 * np.minimum(ux ** (-eps - 1), uy ** (-eps - 1))
    B = np.maximum(ux ** (1 - eps), uy ** (1 - eps)) * (etax - etay) ** 2
    return lhs, A, B


def algebraic_constants(eps: float, delta=None):
    """c1 = eps/2 - 2 delta, c2 = 2 delta + 1/(4 delta) + eps (delta = eps/4 by default)."""
    delta = eps / 4 if delta is None else float(delta)
    if not delta > 0:
        raise InputError("delta must be positive")
    return eps / 2 - 2 * delta, 2 * delta + 1 / (4 * delta) + eps, delta


def check_algebraic_estimate(eps: float, plan: SamplePlan = None, delta=None) -> dict:
    """Count samples with LHS < c1 A - c2 B.

    Also reports ``slack``: the smallest factor k with LHS >= c1 A - k c2 B
    on every sample (k <= 1 means the instantiated constants suffice).
    """
    if not 0 < eps < 1:
        raise InputError("eps must lie in (0,1)")
    plan = plan or default_algebraic_plan()
    ux, uy, etax, etay = _need(plan.draw(), "ux", "uy", "etax", "etay")
    if np.any(ux <= 0) or np.any(uy <= 0):
        raise InputError("u samples must be positive")
    if np.any(etax < 0) or np.any(etay < 0):
        raise InputError("eta samples must be nonnegative")
    c1, c2, delta = algebraic_constants(eps, delta)
    lhs, A, B = algebraic_terms(eps, ux, uy, etax, etay)
    rhs = c1 * A - c2 * B
    scale = np.abs(lhs) + np.abs(c1 * A) + c2 * B
    bad = lhs < rhs - ROUNDING * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(B > 0, (c1 * A - lhs) / (c2 * B), -np.inf)
    slack = float(np.max(need)) if need.size else -np.inf
    return {"eps": eps, "delta": delta, "c1_used": c1, "c2_used": c2,
            "violations": int(bad.sum()), "samples": int(lhs.size),
            "slack": slack, "min_margin": float(np.min(lhs - rhs))}


def genaux_terms(eta1, eta2, t, s):
    eta1, eta2, t, s = (np.asarray(v, float) for v in (eta1, eta2, t, s))
    mx = np.maximum(t * t, s * s)
    d2 = (t - s) ** 2
    mixed = (eta1 * t - eta2 * s) ** 2
    jump = (eta1 - eta2) ** 2 * mx
    lhs4 = np.minimum(eta1 ** 2, eta2 ** 2) * d2
    rhs4 = 0.5 * mixed - jump
    lhs5 = np.maximum(eta1 ** 2, eta2 ** 2) * d2
    rhs5 = 2 * mixed + 2 * jump
    scale = d2 * np.maximum(eta1 ** 2, eta2 ** 2) + mixed + jump
    return lhs4, rhs4, lhs5, rhs5, scale


def check_genaux(plan: SamplePlan = None) -> dict:
    """Violations of min(eta^2)|t-s|^2 >= |eta1 t - eta2 s|^2/2 - (eta1-eta2)^2 max(t,s)^2
    and max(eta^2)|t-s|^2 <= 2|eta1 t - eta2 s|^2 + 2(eta1-eta2)^2 max(t,s)^2."""
    plan = plan or default_genaux_plan()
    eta1, eta2, t, s = _need(plan.draw(), "eta1", "eta2", "t", "s")
    if np.any(eta1 < 0) or np.any(eta2 < 0):
        raise InputError("eta samples must be nonnegative")
    lhs4, rhs4, lhs5, rhs5, scale = genaux_terms(eta1, eta2, t, s)
    tol = ROUNDING * scale
    return {"violations_4": int(np.sum(lhs4 < rhs4 - tol)),
            "violations_5": int(np.sum(lhs5 > rhs5 + tol)), "samples": int(lhs4.size)}


def chain_rule_sides(phi1, phi2, u1, u2, xi1, xi2):
    """LHS and the two stated decompositions of (phi1-phi2)(u1 xi1 - u2 xi2)."""
    dphi, du, dxi = phi1 - phi2, u1 - u2, xi1 - xi2
    lhs = dphi * (u1 * xi1 - u2 * xi2)
    rhs1 = 0.5 * dphi * du * (xi1 + xi2) + 0.5 * dphi * (u1 + u2) * dxi
    rhs2 = du * (phi1 * xi1 - phi2 * xi2) - 0.5 * du * dxi * (phi1 + phi2) \
        + 0.5 * dphi * (u1 + u2) * dxi
    return lhs, rhs1, rhs2


def check_chain_rule_identity(plan: SamplePlan = None) -> dict:
    plan = plan or default_chain_plan()
    vals = _need(plan.draw(), "phi1", "phi2", "u1", "u2", "xi1", "xi2")
    lhs, rhs1, rhs2 = chain_rule_sides(*vals)
    phi1, phi2, u1, u2, xi1, xi2 = vals
    scale = (np.abs(phi1) + np.abs(phi2)) * (np.abs(u1) + np.abs(u2)) \
        * (np.abs(xi1) + np.abs(xi2)) + 1e-300
    res = np.maximum(np.abs(lhs - rhs1), np.abs(lhs - rhs2))
    worst = float(np.max(res / scale))
    return {"max_abs_residual": float(np.max(res)), "max_scaled_residual": worst,
            "pass": bool(worst <= ROUNDING)}


def tail_weight_integral(x: float, s: float, dim: int = 1, tol: float = 1e-10) -> float:
    """Integral over |y| > 1 of (1+|x-y|)^(-d-2s) |y|^(-d-2s) dy, to absolute ``tol``.

    Each half-line is split at 1, |x| and 2|x|; the unbounded piece is mapped
    to a bounded one by y -> 1/y.
    """
    if dim != 1:
        raise InputError("only dim = 1 is supported")
    if not 0 < s < 1:
        raise InputError("s must lie in (0,1)")
    if not tol > 0:
        raise InputError("tol must be positive")
    p = dim + 2.0 * s
    ax = abs(float(x))
    total, err = 0.0, 0.0
    # the two half-lines y > 1 and y < -1 see the source at -|x| and +|x|
    for shift in (ax, -ax):
        def f(y, shift=shift):
            return (1.0 + abs(y - shift)) ** (-p) * y ** (-p)
        cuts = sorted({1.0} | {c for c in (shift, 2 * shift) if c > 1.0})
        for a, b in zip(cuts[:-1], cuts[1:]):
            v, e = quad(f, a, b, epsabs=tol / 8, epsrel=0.0, limit=200)
            total += v
            err += e
        last = cuts[-1]
        v, e = quad(lambda w: f(1.0 / w) / (w * w), 0.0, 1.0 / last,
                    epsabs=tol / 8, epsrel=0.0, limit=200)
        total += v
        err += e
    if err > tol:
        raise NumericError(f"tail quadrature reached only {err:.3e}", err)
    return total


def tail_weight_sweep(s: float, x_max: float = 1e3, points: int = 121, tol: float = 1e-10,
                      dim: int = 1) -> dict:
    """sup over x in [0, x_max] of tail_weight_integral(x) (1+|x|)^(d+2s)."""
    xs = np.concatenate(([0.0], np.logspace(-3, math.log10(x_max), points)))
    p = dim + 2.0 * s
    ratios = np.array([tail_weight_integral(x, s, dim, tol) * (1 + x) ** p for x in xs])
    k = int(np.argmax(ratios))
    return {"c": float(ratios[k]), "argmax": float(xs[k]), "x": xs.tolist(),
            "ratio": ratios.tolist(), "last_ratio": float(ratios[-1])}


def run_lemma_suite(seed: int = 0, count: int = 100_000) -> dict:
    """All lemma checks, keyed by lemma id."""
    out = {}
    alg = {}
    for eps in (0.1, 0.5, 0.9):
        plan = default_algebraic_plan(count, seed)
        proof = check_algebraic_estimate(eps, plan)
        strict = check_algebraic_estimate(eps, plan, delta=eps / 8)
        alg[f"eps={eps}"] = {"proof_delta": proof, "half_delta": strict}
    alg["pass"] = all(v["proof_delta"]["violations"] == 0 and v["half_delta"]["violations"] == 0
                      for k, v in alg.items() if k != "pass")
    out["LEM_ALGEBRAIC"] = alg
    g = check_genaux(default_genaux_plan(count, seed))
    g["pass"] = g["violations_4"] == 0 and g["violations_5"] == 0
    out["LEM_GENAUX"] = g
    out["LEM_CHAIN_RULE"] = check_chain_rule_identity(default_chain_plan(count, seed))
    v0 = tail_weight_integral(0.0, 0.5)
    exact = 2 * (1.5 - 2 * math.log(2))
    sweep = tail_weight_sweep(0.5, 1e3)
    sweep2 = tail_weight_sweep(0.5, 2e3)
    drift = abs(sweep2["c"] - sweep["c"]) / sweep["c"]
    out["LEM_TAIL_WEIGHT"] = {
        "value_x0": v0, "closed_form_x0": exact, "abs_err_x0": abs(v0 - exact),
        "c": sweep["c"], "argmax": sweep["argmax"], "c_doubled_range": sweep2["c"],
        "range_drift": drift,
        "pass": bool(abs(v0 - exact) <= 1e-5 and math.isfinite(sweep["c"]) and drift < 0.01),
    }
    return out

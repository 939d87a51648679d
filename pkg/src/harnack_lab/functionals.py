"""Quantities appearing in the Harnack-type estimates and per-theorem verdicts.

All cylinder extrema are discrete: max/min over grid nodes in the closed ball
and frames in the half-open time window. Space integrals use cell-overlap
weights on the grid plus the exterior closure of the field's grid policy.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .discretization import assemble_weights
from .evolution import SolutionField
from .exceptions import InputError

THEOREM_IDS = ("THM_0_SUP", "THM_0_INF", "THM_0_HARNACK", "THM_ELLIPTIC", "THM_GENERAL",
               "PROP_L1", "THM_IWH", "PROP_EXP_POS", "LEM_L1_PROP", "BND_LOCAL",
               "WHI_GLOBAL", "LIOUVILLE")
TAU_STABILITY_LIMIT = 3.0
_SLACK = 1e-9


@dataclass(frozen=True)
class CylinderSpec:
    """(a tau, b tau] x B_r(x0) with r = tau^(1/2s) unless ``radius`` is given."""

    tau: float
    x0: float = 0.0
    window: tuple = (0.25, 1.0)
    radius: Optional[float] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise InputError("tau must be positive")
        a, b = self.window
        if not 0.0 <= a < b <= 1.0:
            raise InputError("time window must be a sub-interval of (0, 1]")
        if self.radius is not None and not self.radius > 0:
            raise InputError("radius must be positive")

    def r(self, s: float) -> float:
        return self.radius if self.radius is not None else self.tau ** (1.0 / (2 * s))


def _ball_nodes(field_: SolutionField, x0: float, r: float) -> np.ndarray:
    g = field_.grid
    if abs(x0) + r > g.L * (1 + 1e-12):
        raise InputError(f"ball B_{r:g}({x0:g}) leaves the grid [-{g.L:g}, {g.L:g}]")
    idx = np.nonzero(np.abs(field_.x - x0) <= r * (1 + _SLACK))[0]
    if idx.size == 0:
        raise InputError("ball contains no grid node")
    return idx


def _cylinder_values(field_: SolutionField, cyl: CylinderSpec) -> np.ndarray:
    s = field_.kernel.s
    a, b = cyl.window
    frames = field_.window(a * cyl.tau, b * cyl.tau)
    if frames.size == 0:
        raise InputError("cylinder window contains no frame")
    nodes = _ball_nodes(field_, cyl.x0, cyl.r(s))
    return field_.frames[np.ix_(frames, nodes)]


def cylinder_sup(field_: SolutionField, cyl: CylinderSpec) -> float:
    return float(_cylinder_values(field_, cyl).max())


def cylinder_inf(field_: SolutionField, cyl: CylinderSpec) -> float:
    return float(_cylinder_values(field_, cyl).min())


def ball_weights(field_: SolutionField, x0: float, r: float) -> np.ndarray:
    """Length of each cell inside B_r(x0)."""
    g = field_.grid
    if abs(x0) + r > g.L * (1 + 1e-12):
        raise InputError(f"ball B_{r:g}({x0:g}) leaves the grid")
    lo = np.maximum(field_.x - 0.5 * g.h, x0 - r)
    hi = np.minimum(field_.x + 0.5 * g.h, x0 + r)
    return np.clip(hi - lo, 0.0, None)


def _closure_integral(field_: SolutionField, u: np.ndarray, weight, t: float) -> float:
    """Exterior part of the integral of u * weight, per the grid policy."""
    g = field_.grid
    L, p = g.L, g_order(field_)
    if g.ext_policy == "zero_exterior":
        return 0.0
    if g.ext_policy == "dirichlet_data":
        ext = field_.meta.get("exterior")
        if ext is None:
            return 0.0
        right = quad(lambda y: float(ext.value(t, np.array([y]))[0]) * weight(y), L, np.inf,
                     limit=200)[0]
        left = quad(lambda y: float(ext.value(t, np.array([-y]))[0]) * weight(-y), L, np.inf,
                    limit=200)[0]
        return right + left
    if g.closure == "constant":
        def phi(y):
            return 1.0
    else:
        def phi(y):
            return (L / abs(y)) ** p
    right = quad(lambda y: phi(y) * weight(y), L, np.inf, limit=200)[0]
    left = quad(lambda y: phi(y) * weight(-y), L, np.inf, limit=200)[0]
    return float(u[-1] * right + u[0] * left)


def g_order(field_: SolutionField) -> float:
    return field_.kernel.dim + 2.0 * field_.kernel.s


def weighted_space_integral(field_: SolutionField, k: int, weight) -> float:
    """Integral over the real line of u(t_k, x) weight(x) (grid + closure)."""
    u = field_.frames[k]
    x = field_.x
    inner = field_.grid.h * float(np.dot(u, weight(x)))
    return inner + _closure_integral(field_, u, weight, float(field_.times[k]))


def weighted_tail_integral(field_: SolutionField, tau: float, x0: float = 0.0) -> float:
    """tau * integral of u(tau, x) / (tau^(1/2s) + |x - x0|)^(d+2s)."""
    s, p = field_.kernel.s, g_order(field_)
    r = tau ** (1.0 / (2 * s))
    k = field_.frame_index(tau)
    return tau * weighted_space_integral(field_, k, lambda y: (r + np.abs(y - x0)) ** (-p))


def weighted_L1_mu(field_: SolutionField, t: float, x0: float = 0.0) -> float:
    """Integral of u(t, x) (1 + |x - x0|)^(-d-2s)."""
    p = g_order(field_)
    k = field_.frame_index(t)
    return weighted_space_integral(field_, k, lambda y: (1.0 + np.abs(y - x0)) ** (-p))


def weighted_L1_ratio(field_: SolutionField, t_lo: float, t_hi: float) -> dict:
    """max/min of the L1(mu) norm over frames with t in [t_lo, t_hi]."""
    idx = field_.window(t_lo, t_hi, closed_left=True)
    if idx.size == 0:
        raise InputError("no frames in the requested range")
    p = g_order(field_)
    vals = np.array([weighted_space_integral(field_, k, lambda y: (1 + np.abs(y)) ** (-p))
                     for k in idx])
    return {"max": float(vals.max()), "min": float(vals.min()),
            "ratio": float(vals.max() / vals.min()), "t_max": float(field_.times[idx[vals.argmax()]]),
            "t_min": float(field_.times[idx[vals.argmin()]])}


def dual_pairing(u_field: SolutionField, psi_field: SolutionField, t: float) -> float:
    if u_field.grid != psi_field.grid:
        raise InputError("fields live on different grids")
    return u_field.grid.h * float(np.dot(u_field.frame(t), psi_field.frame(t)))


def pairing_drift(u_field: SolutionField, psi_field: SolutionField, t_lo: float,
                  t_hi: float) -> dict:
    idx = u_field.window(t_lo, t_hi, closed_left=True)
    vals = np.array([dual_pairing(u_field, psi_field, float(u_field.times[k])) for k in idx])
    ref = float(vals[0])
    return {"reference": ref, "max_rel_drift": float(np.max(np.abs(vals - ref)) / abs(ref))}


def psi_terminal(grid, s: float, dim: int = 1) -> np.ndarray:
    return (1.0 + np.abs(grid.x)) ** (-(dim + 2.0 * s))


def psi_bound_ratio(psi_field: SolutionField, collar: float = 0.5, min_steps: int = 10) -> dict:
    """Extremes of Psi(t,x)(1+|x|)^(d+2s) over |x| <= collar*L and t <= T - min_steps*dt."""
    if psi_field.mode != "dual":
        raise InputError("psi_bound_ratio needs a dual field")
    s = psi_field.kernel.s
    target = psi_terminal(psi_field.grid, s, psi_field.kernel.dim)
    if not np.allclose(psi_field.frames[-1], target, rtol=1e-12, atol=0):
        raise InputError("terminal datum must be (1+|x|)^(-d-2s)")
    T = float(psi_field.times[-1])
    frames = np.nonzero(psi_field.times <= T - min_steps * psi_field.dt + 1e-12)[0]
    if frames.size == 0:
        raise InputError("dual field too short for the bound check")
    nodes = np.abs(psi_field.x) <= collar * psi_field.grid.L
    r = psi_field.frames[np.ix_(frames, np.nonzero(nodes)[0])] / target[nodes]
    return {"min_ratio": float(r.min()), "max_ratio": float(r.max()), "collar": collar,
            "min_steps": min_steps}


def _time_weights(field_: SolutionField, t_lo: float, t_hi: float):
    """Right-endpoint rule on (t_lo, t_hi]: frame indices and their weights."""
    idx = field_.window(t_lo, t_hi)
    if idx.size == 0:
        raise InputError("time window contains no frame")
    prev = np.concatenate(([t_lo], field_.times[idx[:-1]]))
    w = field_.times[idx] - np.maximum(prev, t_lo)
    return idx, w


class _WeightCache:
    def __init__(self, field_: SolutionField):
        self.field = field_
        self.cache: dict = {}

    def at(self, t: float) -> np.ndarray:
        spec = self.field.kernel
        key = spec.state_key(t)
        if key not in self.cache:
            self.cache[key] = assemble_weights(spec, self.field.grid, t)
        return self.cache[key]


def energy_triple_integral(field_: SolutionField, t0: float, tau: float, q: float,
                           x0: float = 0.0, R: float = 1.0) -> dict:
    """Jump energy over (t0, t0+tau] x B_R x B_R against the L^q norm on the doubled cylinder.

    lhs = sum_t dt sum_ij h w_ij |u_i - u_j| |x_i - x_j| over the ball,
    rhs_base = tau^(1-1/q) (sum_t dt sum_i |cell_i in B_2R| u_i^q)^(1/q)
    over (t0, t0 + 2 tau].
    """
    s, d = field_.kernel.s, field_.kernel.dim
    if not 1.0 < q < 1.0 + 2.0 * s / d:
        raise InputError("q must lie in (1, 1 + 2s/d)")
    if not tau > 0:
        raise InputError("tau must be positive")
    om = ball_weights(field_, x0, R) / field_.grid.h
    nodes = np.nonzero(om > 0)[0]
    om = om[nodes]
    xb = field_.x[nodes]
    dx = np.abs(xb[:, None] - xb[None, :])
    pair = om[:, None] * om[None, :] * dx
    weights = _WeightCache(field_)
    idx, tw = _time_weights(field_, t0, t0 + tau)
    lhs = 0.0
    for k, wt in zip(idx, tw):
        u = field_.frames[k, nodes]
        W = weights.at(float(field_.times[k]))[np.ix_(nodes, nodes)]
        lhs += wt * field_.grid.h * float(np.sum(W * pair * np.abs(u[:, None] - u[None, :])))
    big = ball_weights(field_, x0, 2 * R)
    idx2, tw2 = _time_weights(field_, t0, t0 + 2 * tau)
    lq = sum(wt * float(np.dot(big, np.abs(field_.frames[k]) ** q)) for k, wt in zip(idx2, tw2))
    rhs = tau ** (1 - 1 / q) * lq ** (1 / q)
    return {"lhs": lhs, "rhs_base": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def _space_time_power(field_, t_lo, t_hi, x0, r, power):
    sw = ball_weights(field_, x0, r)
    idx, tw = _time_weights(field_, t_lo, t_hi)
    return sum(wt * float(np.dot(sw, np.abs(field_.frames[k]) ** power))
               for k, wt in zip(idx, tw))


def reverse_holder_ratio(field_: SolutionField, sigma: float, q: float, t0: float = 0.0,
                         x0: float = 0.0, rho: float = 1.0) -> float:
    """(int over (0,1/2)xB_1/2 of v^q)^(1/q) / (int over (0,1)xB_1 of v^sigma)^(1/sigma)

    for v(t, x) = u(t0 + rho^(2s) t, x0 + rho x); integrals are taken in the
    rescaled variables so the geometry is that of the unit cylinder.
    """
    s, d = field_.kernel.s, field_.kernel.dim
    if not 0 < sigma < q < 1 + 2 * s / d:
        raise InputError("need 0 < sigma < q < 1 + 2s/d")
    T = rho ** (2 * s)
    jac = 1.0 / (T * rho ** d)
    top = _space_time_power(field_, t0, t0 + 0.5 * T, x0, 0.5 * rho, q) * jac
    bot = _space_time_power(field_, t0, t0 + T, x0, rho, sigma) * jac
    if bot == 0:
        return 0.0
    return float(top ** (1 / q) / bot ** (1 / sigma))


# -- verdicts -------------------------------------------------------------

@dataclass
class HarnackReport:
    theorem: str
    instances: list
    max_c: float
    tau_stability: float
    passed: Optional[bool]
    ceiling: Optional[float] = None
    inputs: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"theorem": self.theorem, "instances": self.instances, "max_c": self.max_c,
             "tau_stability": self.tau_stability, "pass": self.passed,
             "ceiling": self.ceiling, "inputs": self.inputs}
        if self.extras:
            d["extras"] = self.extras
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("theorem,tau,x0,lhs,rhs,c\n")
        for inst in self.instances:
            buf.write(f"{self.theorem},{inst['tau']:.12g},{inst['x0']:.12g},"
                      f"{inst['lhs']:.17g},{inst['rhs']:.17g},{inst['c']:.17g}\n")
        return buf.getvalue()


def _instance(tau, x0, lhs, rhs, **extra):
    c = lhs / rhs if rhs > 0 else math.inf
    d = {"tau": float(tau), "x0": float(x0), "lhs": float(lhs), "rhs": float(rhs), "c": float(c)}
    d.update({k: float(v) for k, v in extra.items()})
    return d


def tau_stability(instances) -> float:
    """max/min over tau of the per-tau worst constant."""
    per_tau: dict = {}
    for inst in instances:
        per_tau[inst["tau"]] = max(per_tau.get(inst["tau"], 0.0), inst["c"])
    vals = np.array(list(per_tau.values()))
    if vals.size == 0 or np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        return math.inf
    return float(vals.max() / vals.min())


def _sweep(sweep):
    sweep = sweep or {}
    taus = [float(t) for t in sweep.get("tau", [0.25, 0.5, 1.0])]
    x0s = [float(x) for x in sweep.get("x0", [0.0])]
    return taus, x0s, sweep


def _weighted_space_time(field_, t_lo, t_hi, x0, closed=False):
    p = g_order(field_)
    idx, tw = _time_weights(field_, t_lo, t_hi)
    return sum(wt * weighted_space_integral(field_, k, lambda y: (1 + np.abs(y - x0)) ** (-p))
               for k, wt in zip(idx, tw))


def _thm0(field_, taus, x0s, kind):
    out = []
    for tau in taus:
        for x0 in x0s:
            tail = weighted_tail_integral(field_, tau, x0)
            sup = cylinder_sup(field_, CylinderSpec(tau, x0, (0.25, 1.0)))
            inf = cylinder_inf(field_, CylinderSpec(tau, x0, (0.75, 1.0)))
            if kind == "sup":
                out.append(_instance(tau, x0, sup, tail, sup=sup, inf=inf, tail=tail))
            elif kind == "inf":
                out.append(_instance(tau, x0, tail, inf, sup=sup, inf=inf, tail=tail))
            else:
                out.append(_instance(tau, x0, sup, inf, sup=sup, inf=inf, tail=tail))
    return out


def _elliptic(field_, taus, x0s):
    out = []
    s = field_.kernel.s
    for tau in taus:
        k = field_.frame_index(tau)
        for x0 in x0s:
            nodes = _ball_nodes(field_, x0, tau ** (1 / (2 * s)))
            sl = field_.frames[k, nodes]
            tail = weighted_tail_integral(field_, tau, x0)
            sup, inf = float(sl.max()), float(sl.min())
            c_sup, c_inf = sup / tail, tail / inf if inf > 0 else math.inf
            inst = _instance(tau, x0, sup, inf, sup=sup, inf=inf, tail=tail, c_sup=c_sup,
                             c_inf=c_inf)
            inst["c"] = float(max(c_sup, c_inf, inst["c"]))
            out.append(inst)
    return out


def _prop_l1(field_, taus):
    out = []
    for tau in taus:
        r = weighted_L1_ratio(field_, 0.1 * tau, tau)
        out.append(_instance(tau, 0.0, r["max"], r["min"], t_max=r["t_max"], t_min=r["t_min"]))
    return out


def _iwh(field_, taus, x0s, sweep):
    s = field_.kernel.s
    t0 = float(sweep.get("t0", 0.0))
    out = []
    for tau in taus:  # tau = R^(2s)
        R = tau ** (1 / (2 * s))
        for x0 in x0s:
            w = ball_weights(field_, x0, R)
            idx = field_.window(t0, t0 + tau)
            if idx.size == 0:
                raise InputError("improved weak Harnack window contains no frame")
            avg = float(np.max(field_.frames[idx] @ w) / w.sum())
            target = field_.window(t0 + 2 * tau, t0 + 8 * tau)
            target = target[field_.times[target] < t0 + 8 * tau - 1e-12] if target.size > 1 \
                else target
            nodes = _ball_nodes(field_, x0, R)
            if target.size == 0:
                raise InputError("horizon too short for the improved weak Harnack window")
            inf = float(field_.frames[np.ix_(target, nodes)].min())
            out.append(_instance(tau, x0, avg, inf))
    return out


def _lem_l1(field_, sweep):
    x0 = float(sweep.get("x0", [0.0])[0])
    w_half = ball_weights(field_, x0, 0.5)
    w_one = ball_weights(field_, x0, 1.0)
    c_o = float(field_.frames[0] @ w_half)
    mass = field_.frames @ w_one
    ok = mass >= 0.5 * c_o
    # largest frame time up to which the L1 lower bound has held throughout
    k = len(mass) - 1 if ok.all() else int(np.argmin(ok)) - 1
    tau_star = float(field_.times[k] - field_.times[0]) if k >= 1 else 0.0
    lo = float(mass[1:k + 1].min()) if k >= 1 else float(mass[0])
    inst = _instance(tau_star, x0, 0.5 * c_o, lo, c_o=c_o)
    return [inst], tau_star


def _bnd_local(field_, taus, x0s):
    s, d = field_.kernel.s, field_.kernel.dim
    out = []
    for t_o in taus:
        for x0 in x0s:
            sup = cylinder_sup(field_, CylinderSpec(t_o, x0, (0.25, 1.0), radius=1.0))
            integral = _weighted_space_time(field_, 0.0, t_o, x0)
            factor = min(1.0, t_o ** (1 + d / (2 * s)))
            out.append(_instance(t_o, x0, sup * factor, integral, sup=sup))
    return out


def _whi_global(field_, taus, x0s):
    s, d = field_.kernel.s, field_.kernel.dim
    out = []
    for t_o in taus:
        for x0 in x0s:
            inf = cylinder_inf(field_, CylinderSpec(t_o, x0, (0.75, 1.0)))
            integral = _weighted_space_time(field_, 0.25 * t_o, 0.5 * t_o, x0)
            rhs = integral / max(1.0, t_o ** (1 + d / (2 * s)))
            out.append(_instance(t_o, x0, rhs, inf, inf=inf))
    return out


def _exp_pos(fields, sweep):
    """fields: {alpha: SolutionField} prepared with level k on alpha |B_R|."""
    k_level = float(sweep.get("k", 1.0))
    R = float(sweep.get("R", 0.25))
    x0 = float(sweep.get("x0", [0.0])[0])
    t0 = float(sweep.get("t0", 0.0))
    out = []
    alphas, mins = [], []
    for alpha in sorted(fields):
        f = fields[alpha]
        s = f.kernel.s
        T1, T2 = t0 + R ** (2 * s), t0 + 4 * R ** (2 * s)
        idx = f.window(T1, T2)
        idx = idx[f.times[idx] < T2 - 1e-12] if idx.size > 1 else idx
        nodes = _ball_nodes(f, x0, 2 * R)
        m = float(f.frames[np.ix_(idx, nodes)].min()) / k_level
        alphas.append(float(alpha))
        mins.append(m)
        out.append(_instance(R ** (2 * s), x0, m, 1.0, alpha=alpha))
    a, m = np.log(alphas), np.log(np.maximum(mins, 1e-300))
    if len(alphas) >= 2:
        p, log_eta = np.polyfit(a, m, 1)
    else:
        p, log_eta = math.nan, m[0]
    eta = float(np.min(np.exp(m - p * a))) if np.isfinite(p) else float(np.exp(log_eta))
    return out, {"eta": eta, "p": float(p), "eta_fit": float(np.exp(log_eta))}


def _liouville(field_, sweep):
    x0 = float(sweep.get("x0", [0.0])[0])
    R = float(sweep.get("R", 1.0))
    nodes = _ball_nodes(field_, x0, R)
    osc = field_.frames[:, nodes].max(axis=1) - field_.frames[:, nodes].min(axis=1)
    picks = np.unique(np.linspace(0, len(osc) - 1, 11).astype(int))
    out = [_instance(field_.times[k], x0, osc[k], osc[picks[0]] if osc[picks[0]] > 0 else 1.0)
           for k in picks]
    trend = float(osc[-1] / osc[picks[0]]) if osc[picks[0]] > 0 else 0.0
    return out, {"osc_ratio_final_over_initial": trend,
                 "monotone_nonincreasing": bool(np.all(np.diff(osc) <= 1e-12))}


def verdict_theorem(fields, theorem: str, sweep: Optional[dict] = None,
                    ceiling: Optional[float] = None) -> HarnackReport:
    """Evaluate one estimate instance by instance and compare with ``ceiling``.

    ``fields`` is a SolutionField, or for PROP_EXP_POS a mapping
    alpha -> SolutionField. Passing requires max c <= ceiling and
    tau stability (max/min over tau) <= 3; instances with a single tau are
    trivially stable. LIOUVILLE is qualitative and never passes or fails.
    """
    if theorem not in THEOREM_IDS:
        raise InputError(f"unknown theorem id {theorem!r}")
    taus, x0s, sweep = _sweep(sweep)
    extras: dict = {}
    stable_needed = True
    if theorem == "THM_0_SUP" or theorem == "THM_GENERAL":
        inst = _thm0(fields, taus, x0s, "sup")
    elif theorem == "THM_0_INF":
        inst = _thm0(fields, taus, x0s, "inf")
    elif theorem == "THM_0_HARNACK":
        inst = _thm0(fields, taus, x0s, "harnack")
    elif theorem == "THM_ELLIPTIC":
        inst = _elliptic(fields, taus, x0s)
    elif theorem == "PROP_L1":
        inst = _prop_l1(fields, taus)
    elif theorem == "THM_IWH":
        inst = _iwh(fields, taus, x0s, sweep)
    elif theorem == "LEM_L1_PROP":
        inst, tau_star = _lem_l1(fields, sweep)
        extras["tau_measured"] = tau_star
        stable_needed = False
    elif theorem == "BND_LOCAL":
        inst = _bnd_local(fields, taus, x0s)
    elif theorem == "WHI_GLOBAL":
        inst = _whi_global(fields, taus, x0s)
    elif theorem == "PROP_EXP_POS":
        inst, fit = _exp_pos(fields, sweep)
        extras.update(fit)
        stable_needed = False
    else:
        inst, trend = _liouville(fields, sweep)
        extras.update(trend)
        return HarnackReport(theorem, inst, float(max(i["c"] for i in inst)), math.nan, None,
                             None, {"sweep": sweep}, extras)
    cs = [i["c"] for i in inst]
    max_c = float(max(cs))
    stab = tau_stability(inst) if stable_needed else 1.0
    finite = all(math.isfinite(c) for c in cs)
    if theorem == "PROP_EXP_POS":
        ok = finite and extras["eta"] > 0 and math.isfinite(extras["p"])
    elif theorem == "LEM_L1_PROP":
        ok = extras["tau_measured"] > 0 and (ceiling is None or max_c <= ceiling)
    else:
        ok = finite and (ceiling is None or max_c <= ceiling) and stab <= TAU_STABILITY_LIMIT
    inputs = {"sweep": {"tau": taus, "x0": x0s,
                        **{k: v for k, v in sweep.items() if k not in ("tau", "x0")}}}
    return HarnackReport(theorem, inst, max_c, stab, bool(ok), ceiling, inputs, extras)

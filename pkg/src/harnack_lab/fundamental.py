"""Discrete fundamental solution p_{eta,t}(x_i, y_j) and its structural checks.

Column j of the backward-Euler propagator from eta to t, divided by h, is the
solution started from the unit-mass bump at y_j; we keep the whole propagator
so composition and duality can be checked entrywise.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .discretization import Grid, assemble
from .exceptions import InputError
from .kernels import KernelSpec
from .oracles import hk_envelope

_TIME_DIGITS = 12


class _Propagators:
    """Products of backward-Euler step inverses, grouped in runs of equal kernel state."""

    def __init__(self, spec: KernelSpec, grid: Grid, dt: float):
        self.spec, self.grid, self.dt = spec, grid, dt
        self._inv: dict = {}
        self._pow: dict = {}

    def step_inverse(self, t: float) -> np.ndarray:
        key = self.spec.state_key(t)
        if key not in self._inv:
            M = np.eye(self.grid.n) + self.dt * assemble(self.spec, self.grid, t).matrix()
            self._inv[key] = np.linalg.inv(M)
        return self._inv[key]

    def _power(self, t: float, k: int) -> np.ndarray:
        key = (self.spec.state_key(t), k)
        if key not in self._pow:
            self._pow[key] = np.linalg.matrix_power(self.step_inverse(t), k)
        return self._pow[key]

    def runs(self, a: float, b: float):
        """[(t_first, count)] for the steps landing in (a, b], in time order."""
        steps = int(round((b - a) / self.dt))
        if steps < 0 or abs(steps * self.dt - (b - a)) > 1e-9 * max(1.0, abs(b)):
            raise InputError("time stamps must be a whole number of steps apart")
        out = []
        for k in range(1, steps + 1):
            t = round(a + k * self.dt, _TIME_DIGITS)
            key = self.spec.state_key(t)
            if out and out[-1][2] == key:
                out[-1][1] += 1
            else:
                out.append([t, 1, key])
        return [(t, c) for t, c, _ in out]

    def forward(self, a: float, b: float) -> np.ndarray:
        """u(b) = P u(a) for the forward scheme."""
        P = np.eye(self.grid.n)
        for t, c in self.runs(a, b):
            P = self._power(t, c) @ P
        return P

    def adjoint(self, a: float, b: float) -> np.ndarray:
        """Psi(a) = Q Psi(b) for the dual scheme, built from transposed steps."""
        Q = np.eye(self.grid.n)
        for t, c in self.runs(a, b):
            Q = Q @ self._power(t, c).T
        return Q


@dataclass
class HeatKernelTable:
    """Densities p[(start, end)] with p[i, j] ~ p_{start,end}(x_i, y_j).

    For a dual table (``dual=True``) the entry ``p[(start, end)][j, i]`` is the
    dual density p^_{end,start}(y_j, x_i): column i is the dual solution
    started at ``end`` from the bump at x_i, read at ``start``.
    """

    spec: KernelSpec
    grid: Grid
    eta: float
    times: np.ndarray
    dt: float
    densities: dict
    sources: np.ndarray
    dual: bool = False
    meta: dict = field(default_factory=dict)

    def density(self, start: float, end: float) -> np.ndarray:
        key = (round(start, _TIME_DIGITS), round(end, _TIME_DIGITS))
        if key not in self.densities:
            raise InputError(f"time pair {key} not in table")
        return self.densities[key]

    def column(self, end: float, j: int, start=None) -> np.ndarray:
        return self.density(self.eta if start is None else start, end)[:, j]

    def mass(self, end: float, start=None) -> np.ndarray:
        """Sum_i h p(x_i, y_j) for every source column j."""
        P = self.density(self.eta if start is None else start, end)
        return self.grid.h * P[:, self.sources].sum(axis=0)

    def to_csv(self, path=None, stride: int = 1) -> str:
        """Rows t, x, y, p for eta-started columns at the source nodes."""
        buf = io.StringIO()
        buf.write("t,x,y,p\n")
        x = self.grid.x
        for t in self.times:
            P = self.density(self.eta, t)
            for j in self.sources[::stride]:
                for i in range(0, self.grid.n, stride):
                    buf.write(f"{t:.12g},{x[i]:.12g},{x[j]:.12g},{P[i, j]:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def compute_table(spec: KernelSpec, grid: Grid, eta: float, times, dt: float,
                  sources=None, dual: bool = False) -> HeatKernelTable:
    """Propagator densities for every ordered pair of stamps in {eta} U times."""
    if grid.ext_policy not in ("zero_exterior", "truncated_global"):
        raise InputError("heat kernel tables need a global exterior policy")
    times = np.round(np.asarray(sorted(times), float), _TIME_DIGITS)
    if times.size == 0 or np.any(times <= eta):
        raise InputError("times must be nonempty and exceed eta")
    sources = np.arange(grid.n) if sources is None else np.asarray(sources, int)
    if np.any(sources < 0) or np.any(sources >= grid.n):
        raise InputError("sources must be grid node indices")
    prop = _Propagators(spec, grid, dt)
    stamps = [round(float(eta), _TIME_DIGITS)] + [float(t) for t in times]
    dens = {}
    h = grid.h
    for a_i, a in enumerate(stamps):
        dens[(a, a)] = np.eye(grid.n) / h
        # chain consecutive stamps so each step run is formed once per start
        P = np.eye(grid.n)
        prev = a
        for b in stamps[a_i + 1:]:
            if dual:
                P = P @ prop.adjoint(prev, b)
                dens[(a, b)] = P.T / h
            else:
                P = prop.forward(prev, b) @ P
                dens[(a, b)] = P / h
            prev = b
    return HeatKernelTable(spec, grid, float(eta), times, float(dt), dens, sources, dual,
                           {"kernel": spec.to_dict(), "grid": grid.to_dict()})


def _interior(grid: Grid, frac: float = 0.5) -> np.ndarray:
    return np.abs(grid.x) <= frac * grid.L


def check_nonnegative_mass(table: HeatKernelTable) -> dict:
    """Exact entrywise sign, mass <= 1 and mass nonincreasing along the times."""
    min_entry = min(float(table.density(table.eta, t).min()) for t in table.times)
    masses = np.array([table.mass(t) for t in table.times])
    increase = float(np.max(np.diff(masses, axis=0))) if len(table.times) > 1 else 0.0
    return {"min_entry": min_entry, "nonnegative": bool(min_entry >= 0.0),
            "max_mass": float(masses.max()), "mass_le_1": bool(masses.max() <= 1.0 + 1e-12),
            "max_mass_increase": increase, "mass_nonincreasing": bool(increase <= 1e-12)}


def check_chapman_kolmogorov(table: HeatKernelTable, eta: float, tau: float, t: float,
                             floor: float = 1e-6) -> dict:
    """Compare sum_z h p_{tau,t}(x,z) p_{eta,tau}(z,y) with p_{eta,t}(x,y)."""
    if not eta <= tau < t:
        raise InputError("need eta <= tau < t")
    outer = table.density(tau, t)
    inner = table.density(eta, tau)
    direct = table.density(eta, t)
    comp = table.grid.h * outer @ inner[:, table.sources]
    ref = direct[:, table.sources]
    inside = _interior(table.grid)
    mask = inside[:, None] & inside[table.sources][None, :] & (ref >= floor)
    if not np.any(mask):
        raise InputError("no interior entries above the floor")
    rel = np.abs(comp - ref)[mask] / ref[mask]
    return {"max_rel_err": float(rel.max()), "entries": int(mask.sum())}


def check_duality(table_forward: HeatKernelTable, table_dual: HeatKernelTable,
                  floor: float = 1e-6) -> dict:
    """p_{eta,t}(x,y) against p^_{t,eta}(y,x) over all common pairs."""
    f, d = table_forward, table_dual
    if f.dual or not d.dual:
        raise InputError("need a forward table and a dual table")
    if f.grid != d.grid or f.spec != d.spec or f.dt != d.dt or f.eta != d.eta \
            or not np.array_equal(f.times, d.times):
        raise InputError("tables differ in configuration")
    worst = 0.0
    count = 0
    src = f.sources
    for t in f.times:
        P = f.density(f.eta, t)[:, src]
        Q = d.density(d.eta, t)[:, src]
        mask = P >= floor
        if np.any(mask):
            worst = max(worst, float(np.max(np.abs(P - Q)[mask] / P[mask])))
            count += int(mask.sum())
    return {"max_rel_err": worst, "entries": count}


def check_envelope(table: HeatKernelTable, C: float = 4.0, collar: float = 0.5,
                   min_steps: int = 10) -> dict:
    """Smallest C with C^-1 env <= p <= C env on the admissible entries.

    Admissible: |x|, |y| <= collar * L and t - eta >= min_steps * dt. The
    report also gives the two one-sided constants and the scale-free value
    sqrt(max ratio / min ratio), which is what remains after the best
    rescaling of the envelope.
    """
    grid, s = table.grid, table.spec.s
    x = grid.x
    inside = _interior(grid, collar)
    src = table.sources[inside[table.sources]]
    lo, hi = np.inf, 0.0
    used = []
    for t in table.times:
        age = t - table.eta
        if age < min_steps * table.dt - 1e-12:
            continue
        used.append(float(t))
        P = table.density(table.eta, t)[np.ix_(inside, src)]
        env = np.asarray(hk_envelope(age, x[inside][:, None] - x[src][None, :], s))
        r = P / env
        lo, hi = min(lo, float(r.min())), max(hi, float(r.max()))
    if not used:
        raise InputError("no table time is old enough for the envelope check")
    measured = max(hi, 1.0 / lo)
    return {"holds_upper": bool(hi <= C), "holds_lower": bool(lo >= 1.0 / C),
            "measured_C": measured, "upper_C": hi, "lower_C": 1.0 / lo,
            "scale_free_C": float(np.sqrt(hi / lo)), "C": C, "times_used": used,
            "collar": collar, "min_steps": min_steps}

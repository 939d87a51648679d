"""Symmetric jump kernels K(t; x, y) = a(t, x, y) |x - y|^(-d-2s).

Every built-in family is written as a bounded coefficient ``a`` times the
fractional-Laplacian envelope, so the ellipticity window is a statement about
``a`` alone.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, InputError
from .sampling import SamplePlan

FAMILIES = ("frac_laplacian", "checkerboard", "time_oscillating", "custom_table")

_PARAM_KEYS = {
    "frac_laplacian": {"a"},
    "checkerboard": {"cell", "time_cell"},
    "time_oscillating": {"omega"},
    "custom_table": {"cell", "origin", "values", "default"},
}


@dataclass(frozen=True, eq=True)
class KernelSpec:
    """Parametrized kernel family with order ``s`` and window ``[lam, Lam]``.

    Family parameters (``params``):

    * ``frac_laplacian``: ``a`` (constant coefficient, default 1).
    * ``checkerboard``: ``cell`` (spatial cell size, default 1), ``time_cell``
      (temporal cell size, default 0.5; ``inf`` freezes the pattern).
    * ``time_oscillating``: ``omega`` (angular frequency, default 2*pi).
    * ``custom_table``: ``cell``, ``origin``, ``values`` (square symmetric
      table of coefficients over cells ``origin + k*cell``) and ``default``
      (coefficient outside the table).
    """

    s: float
    lam: float = 1.0
    Lam: float = 1.0
    family: str = "frac_laplacian"
    params: dict = field(default_factory=dict, hash=False)
    dim: int = 1

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InputError("s must lie in (0,1)")
        if self.dim != 1:
            raise InputError("only dim = 1 is supported")
        if not 0.0 < self.lam <= self.Lam:
            raise InputError("need 0 < lambda <= Lambda")
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}")
        unknown = set(self.params) - _PARAM_KEYS[self.family]
        if unknown:
            raise InputError(f"unknown params for {self.family}: {sorted(unknown)}")
        if self.family == "custom_table":
            vals = np.asarray(self.params.get("values", [[1.0]]), dtype=float)
            if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
                raise InputError("custom_table values must be a square table")
            if not np.array_equal(vals, vals.T):
                raise InputError("custom_table values must be symmetric")
            if np.any(vals < 0) or self.params.get("default", 1.0) < 0:
                raise InputError("custom_table coefficients must be nonnegative")
        for key in ("cell", "time_cell", "omega"):
            if key in self.params and not float(self.params[key]) > 0:
                raise InputError(f"param {key!r} must be positive")

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {"s": self.s, "dim": self.dim, "lambda": self.lam, "Lambda": self.Lam,
                "family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        allowed = {"s", "dim", "lambda", "Lambda", "family", "params"}
        extra = set(d) - allowed
        if extra:
            raise InputError(f"unknown kernel keys: {sorted(extra)}")
        return cls(s=float(d["s"]), lam=float(d.get("lambda", 1.0)),
                   Lam=float(d.get("Lambda", d.get("lambda", 1.0))),
                   family=d.get("family", "frac_laplacian"),
                   params=dict(d.get("params", {})), dim=int(d.get("dim", 1)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        return cls.from_dict(json.loads(text))

    # -- coefficient -----------------------------------------------------
    @property
    def order(self) -> float:
        return self.dim + 2.0 * self.s

    def _p(self, key, default):
        return float(self.params.get(key, default))

    def coefficient(self, t, x, y) -> np.ndarray:
        """Coefficient ``a(t, x, y) = K(t;x,y) |x-y|^(d+2s)``, broadcast."""
        t, x, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float),
                                      np.asarray(y, float))
        fam = self.family
        if fam == "frac_laplacian":
            return np.full(x.shape, self._p("a", 1.0))
        if fam == "checkerboard":
            ell = self._p("cell", 1.0)
            parity = np.floor(x / ell) + np.floor(y / ell) + self._time_index(t)
            return np.where(np.mod(parity, 2) == 0, self.lam, self.Lam)
        if fam == "time_oscillating":
            return np.broadcast_to(self._oscillation(t), x.shape).copy()
        vals = np.asarray(self.params.get("values", [[1.0]]), dtype=float)
        m = vals.shape[0]
        ell = self._p("cell", 1.0)
        origin = self._p("origin", -0.5 * m * ell)
        default = self._p("default", 1.0)
        i = np.floor((x - origin) / ell)
        j = np.floor((y - origin) / ell)
        inside = (i >= 0) & (i < m) & (j >= 0) & (j < m)
        out = np.full(x.shape, default)
        out[inside] = vals[i[inside].astype(int), j[inside].astype(int)]
        return out

    def _time_index(self, t):
        tc = self._p("time_cell", 0.5)
        if math.isinf(tc):
            return np.zeros_like(t)
        return np.floor(t / tc)

    def _oscillation(self, t):
        omega = self._p("omega", 2.0 * math.pi)
        mid = 0.5 * (self.lam + self.Lam)
        amp = 0.5 * (self.Lam - self.lam)
        return mid + amp * np.sign(np.sin(omega * np.asarray(t, float)))

    # -- structure used by assembly ---------------------------------------
    def state_key(self, t: float):
        """Hashable key; equal keys mean identical coefficients at both times."""
        if self.family == "checkerboard":
            return int(np.mod(self._time_index(np.asarray(float(t))), 2))
        if self.family == "time_oscillating":
            return float(np.sign(np.sin(self._p("omega", 2 * math.pi) * float(t))))
        return 0

    def time_factor(self, t: float):
        """Scalar f(t) with a(t,x,y) = f(t) a_ref(x,y), or None if not separable."""
        if self.family == "time_oscillating":
            return float(self._oscillation(t))
        if self.family == "checkerboard" and not math.isinf(self._p("time_cell", 0.5)):
            return None
        return 1.0

    def coefficient_breaks(self, lo: float, hi: float) -> np.ndarray:
        """Points in (lo, hi) where ``a(t, x, .)`` may jump, for any x and t."""
        if self.family == "checkerboard":
            ell = self._p("cell", 1.0)
            k = np.arange(math.floor(lo / ell) + 1, math.ceil(hi / ell))
            pts = k * ell
        elif self.family == "custom_table":
            vals = np.asarray(self.params.get("values", [[1.0]]))
            m = vals.shape[0]
            ell = self._p("cell", 1.0)
            origin = self._p("origin", -0.5 * m * ell)
            pts = origin + ell * np.arange(m + 1)
        else:
            return np.empty(0)
        return pts[(pts > lo) & (pts < hi)]

    def far_coefficient(self, t: float, x: np.ndarray) -> np.ndarray:
        """Coefficient used for |y| beyond the last resolved break."""
        x = np.asarray(x, float)
        if self.family == "checkerboard":
            return np.full(x.shape, 0.5 * (self.lam + self.Lam))
        if self.family == "custom_table":
            return np.full(x.shape, self._p("default", 1.0))
        return self.coefficient(t, x, x + 1.0)

    @property
    def exterior_period(self):
        """Spatial period of the y-dependence far out (None if constant)."""
        if self.family == "checkerboard":
            return self._p("cell", 1.0)
        return None


def poisson_matched(family: str = "frac_laplacian") -> KernelSpec:
    """s = 1/2 kernel 1/(pi |x-y|^2), whose heat kernel is the Poisson kernel."""
    c = 1.0 / math.pi
    return KernelSpec(s=0.5, lam=c, Lam=c, family=family, params={"a": c})


def evaluate(spec: KernelSpec, t, x, y):
    """K(t; x, y). Raises DomainError on the diagonal x = y."""
    x_arr = np.asarray(x, float)
    y_arr = np.asarray(y, float)
    if np.any(x_arr == y_arr):
        raise DomainError("kernel is singular on the diagonal x = y")
    r = np.abs(x_arr - y_arr)
    out = spec.coefficient(t, x_arr, y_arr) * r ** (-spec.order)
    return out if out.ndim else float(out)


@dataclass
class BoundReport:
    min_ratio: float
    max_ratio: float
    passed: bool

    def to_dict(self):
        return {"min_ratio": self.min_ratio, "max_ratio": self.max_ratio, "pass": self.passed}


@dataclass
class UJSReport:
    worst_ratio: float
    passed: bool

    def to_dict(self):
        return {"worst_ratio": self.worst_ratio, "pass": self.passed}


def _as_samples(samples):
    if isinstance(samples, SamplePlan):
        d = samples.draw()
        return d["t"], d["x"], d["y"]
    arr = np.asarray(samples, float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
        raise InputError("samples must be a SamplePlan or a nonempty (m, 3) array of (t, x, y)")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def default_sample_plan(count: int = 1000, seed: int = 0, width: float = 10.0) -> SamplePlan:
    return SamplePlan(count, seed, {"t": (0.0, 2.0), "x": (-width, width), "y": (-width, width)})


def verify_bounds(spec: KernelSpec, samples=None, rtol: float = 1e-12) -> BoundReport:
    """Extremes of K |x-y|^(d+2s) over the samples, checked against [lam, Lam]."""
    t, x, y = _as_samples(default_sample_plan() if samples is None else samples)
    keep = x != y
    if not np.any(keep):
        raise InputError("all samples lie on the diagonal")
    t, x, y = t[keep], x[keep], y[keep]
    ratio = np.asarray(evaluate(spec, t, x, y)) * np.abs(x - y) ** spec.order
    lo, hi = float(ratio.min()), float(ratio.max())
    ok = lo >= spec.lam * (1 - rtol) and hi <= spec.Lam * (1 + rtol)
    return BoundReport(lo, hi, bool(ok))


def _ball_mean(spec, t, x, y, r, nodes):
    """Mean over z in B_r(x) of K(t; z, y), composite Gauss-Legendre at breaks."""
    g, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.concatenate(([x - r], spec.coefficient_breaks(x - r, x + r), [x + r]))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        z = 0.5 * (a + b) + 0.5 * (b - a) * g
        total += 0.5 * (b - a) * np.dot(w, evaluate(spec, t, z, y))
    return total / (2 * r)


def verify_ujs(spec: KernelSpec, r: float, samples=None, nodes: int = 64,
               tol: float = 1e-9) -> UJSReport:
    """Worst K(t;x,y) / (Lam * mean_{B_r(x)} K(t;.,y)); pass iff <= 1 + tol."""
    if nodes < 64:
        raise InputError("UJS quadrature needs at least 64 nodes per ball")
    t, x, y = _as_samples(default_sample_plan() if samples is None else samples)
    dist = np.abs(x - y)
    if np.any(r > np.minimum(0.25, dist / 4) * (1 + 1e-12)):
        raise InputError("radius must satisfy r <= min(1/4, |x-y|/4) for every sample")
    worst = 0.0
    for ti, xi, yi in zip(t, x, y):
        k = evaluate(spec, ti, xi, yi)
        worst = max(worst, k / (spec.Lam * _ball_mean(spec, ti, xi, yi, r, nodes)))
    return UJSReport(float(worst), bool(worst <= 1 + tol))

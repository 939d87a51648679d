"""Cell-centred quadrature of the nonlocal operator on a uniform 1-D grid.

The discrete operator is

    (A u)_i = sum_j w_ij (u_i - u_j) + tail_i u_i - exterior_i,

where ``exterior_i`` collects the exterior contribution: a prescribed load for
Dirichlet data, or a coupling to the boundary nodes for the global closures.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import InputError
from .kernels import KernelSpec

EXT_POLICIES = ("zero_exterior", "dirichlet_data", "truncated_global")
CLOSURES = ("matched_decay", "constant")

# number of coefficient cells resolved exactly beyond |y| = L before the
# far field is replaced by its cell average
_EXACT_CELLS = 1024
_GL_PIECE = 8
_GL_FAR = 64


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``n`` cells on [-L, L]; nodes are cell centres."""

    L: float
    n: int
    ext_policy: str = "zero_exterior"
    closure: str = "matched_decay"

    def __post_init__(self):
        if not self.L > 0:
            raise InputError("L must be positive")
        if int(self.n) != self.n or self.n < 16 or self.n % 2 == 0:
            raise InputError("n must be an odd integer >= 16")
        if self.ext_policy not in EXT_POLICIES:
            raise InputError(f"unknown ext_policy {self.ext_policy!r}")
        if self.closure not in CLOSURES:
            raise InputError(f"unknown closure {self.closure!r}")

    @classmethod
    def from_spacing(cls, L: float, h: float, **kw) -> "Grid":
        n = int(round(2 * L / h))
        if n % 2 == 0:
            n += 1
        return cls(L, n, **kw)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    @property
    def center(self) -> int:
        return self.n // 2

    def to_dict(self) -> dict:
        d = {"L": self.L, "n": self.n, "ext_policy": self.ext_policy}
        if self.ext_policy == "truncated_global":
            d["closure"] = self.closure
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        extra = set(d) - {"L", "n", "ext_policy", "closure"}
        if extra:
            raise InputError(f"unknown grid keys: {sorted(extra)}")
        return cls(float(d["L"]), int(d["n"]), d.get("ext_policy", "zero_exterior"),
                   d.get("closure", "matched_decay"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Grid":
        return cls.from_dict(json.loads(text))

    def with_policy(self, ext_policy: str, closure: Optional[str] = None) -> "Grid":
        return Grid(self.L, self.n, ext_policy, closure or self.closure)


@dataclass(frozen=True)
class ExteriorData:
    """Exterior values g(t, y) for |y| > L.

    ``g`` is vectorized in ``y``. With ``spatially_constant`` the load reduces
    to ``g(t, L) * tail`` and no quadrature is needed.
    """

    g: Callable
    spatially_constant: bool = False

    @classmethod
    def constant(cls, value: float) -> "ExteriorData":
        return cls(lambda t, y: np.full(np.shape(y), float(value)), True)

    @classmethod
    def step_in_time(cls, t_switch: float = 0.0, before: float = 0.0,
                     after: float = 1.0) -> "ExteriorData":
        """g = before for t <= t_switch, after for t > t_switch."""
        def g(t, y):
            return np.full(np.shape(y), after if t > t_switch else before)
        return cls(g, True)

    def value(self, t, y):
        return np.asarray(self.g(t, np.asarray(y, float)), float)


@dataclass(frozen=True)
class OperatorMatrix:
    """Discretized operator at a fixed time ``t``.

    ``weights`` is the dense symmetric coupling (zero diagonal); ``tail`` the
    kernel mass from each node into |y| > L. ``couple_left``/``couple_right``
    attach the global closure to nodes 0 and n-1; ``exterior_load`` is the
    Dirichlet load.
    """

    t: float
    grid: Grid
    weights: np.ndarray
    tail: np.ndarray
    couple_left: Optional[np.ndarray] = None
    couple_right: Optional[np.ndarray] = None
    exterior_load: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def matrix(self) -> np.ndarray:
        """Dense matrix of u -> A u (the exterior load excluded)."""
        A = -self.weights.copy()
        A[np.diag_indices_from(A)] = self.weights.sum(axis=1) + self.tail
        if self.couple_left is not None:
            A[:, 0] -= self.couple_left
            A[:, -1] -= self.couple_right
        return A

    def scaled(self, factor: float) -> "OperatorMatrix":
        def sc(v):
            return None if v is None else factor * v
        return OperatorMatrix(self.t, self.grid, factor * self.weights, factor * self.tail,
                              sc(self.couple_left), sc(self.couple_right),
                              sc(self.exterior_load), dict(self.meta))

    def to_csv(self, path=None) -> str:
        """(i, j, w) triplets of the nonzero off-diagonal weights."""
        i, j = np.nonzero(self.weights)
        buf = io.StringIO()
        buf.write("i,j,w\n")
        for a, b, w in zip(i, j, self.weights[i, j]):
            buf.write(f"{a},{b},{w:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _coefficient_pieces(spec: KernelSpec, L: float, side: int):
    """|y|-break points from L outward on one side, and the far cut."""
    period = spec.exterior_period
    if period is not None:
        cut = L + _EXACT_CELLS * period
    elif spec.family == "custom_table":
        pts = side * spec.coefficient_breaks(-np.inf, np.inf)
        cut = max(L, float(pts.max())) if pts.size else L
    else:
        cut = L
    pts = side * spec.coefficient_breaks(-np.inf, np.inf) if period is None else \
        side * spec.coefficient_breaks(min(side * L, side * cut), max(side * L, side * cut))
    inner = np.sort(pts[(pts > L) & (pts < cut)])
    edges = np.concatenate(([L], inner, [cut])) if cut > L else np.array([L])
    return edges, cut


def one_sided_exterior(spec: KernelSpec, grid: Grid, t: float, side: int,
                       phi: Optional[Callable] = None) -> np.ndarray:
    """R_i = integral over side*y > L of K(t; x_i, y) phi(y) dy.

    Integration uses the variable w = (|y| - side*x)^(-2s), in which the
    kernel is the coefficient times a constant. The result is exact for
    phi = 1 and piecewise-constant coefficients; for general phi each
    coefficient piece gets a Gauss-Legendre rule in w.
    """
    s2 = 2.0 * spec.s
    x = grid.x
    xs = side * x  # distance coordinate: |y| - xs = |y - x|
    edges, cut = _coefficient_pieces(spec, grid.L, side)

    def coef(yabs):
        return spec.coefficient(t, x[:, None], side * np.asarray(yabs)[None, :])

    def piece_integral(lo, hi, a):
        # lo, hi: |y| limits (arrays over pieces); a: (n, m) coefficients
        w_hi = (lo[None, :] - xs[:, None]) ** (-s2)
        finite = np.isfinite(hi)
        w_lo = np.where(finite[None, :],
                        (np.where(finite, hi, lo + 1.0)[None, :] - xs[:, None]) ** (-s2), 0.0)
        if phi is None:
            return (a * (w_hi - w_lo)).sum(axis=1) / s2
        g, gw = np.polynomial.legendre.leggauss(_GL_PIECE if np.all(finite) else _GL_FAR)
        total = np.zeros(x.size)
        for k in range(lo.size):
            wl, wh = w_lo[:, k:k + 1], w_hi[:, k:k + 1]
            w = 0.5 * (wl + wh) + 0.5 * (wh - wl) * g[None, :]
            yabs = xs[:, None] + w ** (-1.0 / s2)
            vals = phi(side * yabs)
            total += a[:, k] * 0.5 * (wh - wl)[:, 0] * (vals @ gw)
        return total / s2

    out = np.zeros(x.size)
    if edges.size > 1:
        lo, hi = edges[:-1], edges[1:]
        a = coef(0.5 * (lo + hi))
        out += piece_integral(lo, hi, a)
    a_far = spec.far_coefficient(t, x)[:, None]
    out += piece_integral(np.array([cut]), np.array([np.inf]), a_far)
    period = spec.exterior_period
    if period is not None:
        # averaged far field: add half of the first cell's deviation, the
        # leading term of the alternating remainder
        first = coef(np.array([cut + 0.5 * period]))
        lo1, hi1 = np.array([cut]), np.array([cut + period])
        out += 0.5 * piece_integral(lo1, hi1, first - a_far)
    return out


def exterior_mass(spec: KernelSpec, grid: Grid, t: float, phi: Optional[Callable] = None):
    """Left and right exterior integrals of K(t; x_i, .) phi."""
    return (one_sided_exterior(spec, grid, t, -1, phi),
            one_sided_exterior(spec, grid, t, +1, phi))


def assemble_weights(spec: KernelSpec, grid: Grid, t: float) -> np.ndarray:
    x, h, s = grid.x, grid.h, spec.s
    dist = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dist, 1.0)
    a = spec.coefficient(t, x[:, None], x[None, :])
    W = h * a * dist ** (-spec.order)
    # neighbouring cells: exact integral of |x_i - y|^(-1-2s) over the cell
    near = ((0.5 * h) ** (-2 * s) - (1.5 * h) ** (-2 * s)) / (2 * s)
    idx = np.arange(grid.n - 1)
    W[idx, idx + 1] = a[idx, idx + 1] * near
    W[idx + 1, idx] = a[idx + 1, idx] * near
    np.fill_diagonal(W, 0.0)
    return W


def assemble(spec: KernelSpec, grid: Grid, t: float,
             exterior: Optional[ExteriorData] = None) -> OperatorMatrix:
    """Discretize the operator at time ``t`` on ``grid``.

    For ``dirichlet_data`` the load is computed from ``exterior`` (zero data
    when it is omitted).
    """
    W = assemble_weights(spec, grid, t)
    left, right = exterior_mass(spec, grid, t)
    tail = left + right
    cl = cr = load = None
    if grid.ext_policy == "truncated_global":
        if grid.closure == "constant":
            cl, cr = left, right
        else:
            L, order = grid.L, spec.order
            cl, cr = exterior_mass(spec, grid, t, phi=lambda y: (L / np.abs(y)) ** order)
    elif grid.ext_policy == "dirichlet_data":
        load = exterior_load(spec, grid, t, exterior, tail=(left, right))
    elif exterior is not None:
        raise InputError("exterior data only applies to the dirichlet_data policy")
    return OperatorMatrix(float(t), grid, W, tail, cl, cr, load,
                          {"kernel": spec.to_dict(), "grid": grid.to_dict()})


def exterior_load(spec: KernelSpec, grid: Grid, t: float,
                  exterior: Optional[ExteriorData], tail=None) -> np.ndarray:
    if exterior is None:
        return np.zeros(grid.n)
    if exterior.spatially_constant:
        if tail is None:
            tail = exterior_mass(spec, grid, t)
        left, right = tail
        return float(exterior.value(t, np.array([grid.L]))[0]) * (left + right)
    left, right = exterior_mass(spec, grid, t, phi=lambda y: exterior.value(t, y))
    return left + right


def apply(op: OperatorMatrix, u, exterior=None) -> np.ndarray:
    """(A u)_i including the exterior contribution.

    ``exterior`` may be None (use the operator's own load or closure), a
    number (spatially constant exterior value, any policy) or an
    :class:`ExteriorData` evaluated at ``op.t``.
    """
    u = np.asarray(u, float)
    if u.shape != (op.grid.n,):
        raise InputError(f"grid function must have shape ({op.grid.n},), got {u.shape}")
    W = op.weights
    out = W.sum(axis=1) * u - W @ u + op.tail * u
    if exterior is None:
        if op.couple_left is not None:
            out -= op.couple_left * u[0] + op.couple_right * u[-1]
        if op.exterior_load is not None:
            out -= op.exterior_load
        return out
    if isinstance(exterior, ExteriorData):
        if exterior.spatially_constant:
            return out - float(exterior.value(op.t, np.array([op.grid.L]))[0]) * op.tail
        spec = KernelSpec.from_dict(op.meta["kernel"])
        return out - exterior_load(spec, op.grid, op.t, exterior)
    return out - float(exterior) * op.tail

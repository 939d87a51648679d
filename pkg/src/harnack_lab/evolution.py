"""Backward-Euler evolution for the Cauchy, local Dirichlet and dual problems.

Every step solves ``(I + dt A(t_{k+1})) u^{k+1} = u^k + dt * load``. The step
matrix is an M-matrix, so nonnegative data stay nonnegative and zero data stay
exactly zero.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .discretization import ExteriorData, Grid, OperatorMatrix, assemble, exterior_load
from .exceptions import InputError, NumericError
from .kernels import KernelSpec

MODES = ("cauchy", "local_dirichlet", "dual")
RESIDUAL_TOL = 1e-12
T_INIT = 0.01
_TIME_DIGITS = 12


@dataclass(frozen=True)
class SolutionField:
    """Frames ``frames[k]`` of a grid function at ``times[k]``."""

    grid: Grid
    times: np.ndarray
    frames: np.ndarray
    mode: str
    kernel: KernelSpec
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        if self.frames.shape != (len(self.times), self.grid.n):
            raise InputError("frames must have shape (len(times), n)")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise InputError("times must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def frame_index(self, t: float, tol: Optional[float] = None) -> int:
        """Index of the frame nearest to ``t``; must lie within ``tol`` (dt/2)."""
        tol = 0.5 * self.dt * (1 + 1e-9) if tol is None else tol
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol:
            raise InputError(f"no frame within {tol:g} of t={t:g}")
        return k

    def frame(self, t: float) -> np.ndarray:
        return self.frames[self.frame_index(t)]

    def window(self, t_lo: float, t_hi: float, closed_left: bool = False) -> np.ndarray:
        """Indices of frames with t_lo < t <= t_hi (half-open, small slack)."""
        eps = 1e-9 * max(1.0, abs(t_hi))
        lo_ok = self.times >= t_lo - eps if closed_left else self.times > t_lo + eps
        return np.nonzero(lo_ok & (self.times <= t_hi + eps))[0]

    def with_frames(self, frames, **meta) -> "SolutionField":
        m = dict(self.meta)
        m.update(meta)
        return SolutionField(self.grid, self.times, np.asarray(frames, float), self.mode,
                             self.kernel, self.dt, m)

    def to_csv(self, path=None, every: int = 1) -> str:
        """Long-format CSV with columns t, x, u."""
        buf = io.StringIO()
        buf.write("t,x,u\n")
        x = self.x
        for k in range(0, len(self.times), every):
            t = self.times[k]
            for xi, ui in zip(x, self.frames[k]):
                buf.write(f"{t:.12g},{xi:.12g},{ui:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def bump(grid: Grid, center: float = 0.0) -> np.ndarray:
    """Unit-mass box of width h and height 1/h at the node nearest ``center``."""
    f = np.zeros(grid.n)
    f[int(np.argmin(np.abs(grid.x - center)))] = 1.0 / grid.h
    return f


class _Stepper:
    """Cached factorizations of I + dt A(t) keyed by the kernel state."""

    def __init__(self, spec: KernelSpec, grid: Grid, dt: float, transpose: bool = False):
        self.spec, self.grid, self.dt, self.transpose = spec, grid, dt, transpose
        self._ops: dict = {}
        self._lu: dict = {}

    def operator(self, t: float) -> OperatorMatrix:
        key = self.spec.state_key(t)
        if key not in self._ops:
            self._ops[key] = assemble(self.spec, self.grid, t)
        return self._ops[key]

    def solve(self, t: float, rhs: np.ndarray) -> np.ndarray:
        key = self.spec.state_key(t)
        if key not in self._lu:
            M = np.eye(self.grid.n) + self.dt * self.operator(t).matrix()
            if self.transpose:
                M = M.T.copy()
            self._lu[key] = (M, lu_factor(M))
        M, lu = self._lu[key]
        norm_b = np.linalg.norm(rhs)
        if norm_b == 0.0:
            return np.zeros_like(rhs)
        x = lu_solve(lu, rhs)
        for _ in range(4):
            r = rhs - M @ x
            res = np.linalg.norm(r) / norm_b
            if res <= RESIDUAL_TOL:
                return x
            x = x + lu_solve(lu, r)
        r = rhs - M @ x
        res = np.linalg.norm(r) / norm_b
        if res <= RESIDUAL_TOL:
            return x
        raise NumericError(f"linear solve residual {res:.3e} above {RESIDUAL_TOL:g}", res)


def _time_grid(t_start: float, T: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise InputError("dt must be positive")
    if not T > t_start:
        raise InputError("horizon must exceed the start time")
    steps = int(round((T - t_start) / dt))
    if steps < 1 or abs(steps * dt - (T - t_start)) > 1e-9 * max(1.0, abs(T)):
        raise InputError("horizon must be an integer number of steps")
    return np.round(t_start + dt * np.arange(steps + 1), _TIME_DIGITS)


def _check_datum(grid: Grid, f) -> np.ndarray:
    f = np.asarray(f, float)
    if f.shape != (grid.n,):
        raise InputError(f"datum must have shape ({grid.n},), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise InputError("datum must be finite")
    return f


def _march(stepper, f, times, load_fn, forcing, save_every):
    dt = stepper.dt
    saved_t, saved = [times[0]], [f.copy()]
    u = f.copy()
    for k in range(1, len(times)):
        t = times[k]
        rhs = u.copy()
        load = load_fn(t)
        if load is not None:
            rhs += dt * load
        if forcing is not None:
            rhs += dt * np.asarray(forcing(t), float)
        u = stepper.solve(t, rhs)
        if k % save_every == 0 or k == len(times) - 1:
            saved_t.append(t)
            saved.append(u.copy())
    return np.array(saved_t), np.array(saved)


def solve_cauchy(spec: KernelSpec, grid: Grid, f, T: float, dt: float, t_start: float = 0.0,
                 save_every: int = 1, forcing: Optional[Callable] = None) -> SolutionField:
    """Global problem on [t_start, T] from ``f``.

    ``forcing(t)`` optionally adds a source term (nonnegative forcing gives a
    supersolution).
    """
    if grid.ext_policy not in ("zero_exterior", "truncated_global"):
        raise InputError("solve_cauchy needs ext_policy zero_exterior or truncated_global")
    f = _check_datum(grid, f)
    times = _time_grid(t_start, T, dt)
    stepper = _Stepper(spec, grid, dt)
    ts, frames = _march(stepper, f, times, lambda t: None, forcing, save_every)
    return SolutionField(grid, ts, frames, "cauchy", spec, dt,
                         {"t_start": t_start, "save_every": save_every,
                          "forced": forcing is not None})


def solve_local(spec: KernelSpec, grid: Grid, f, g: ExteriorData, t_start: float, T: float,
                dt: float, save_every: int = 1) -> SolutionField:
    """Exterior-Dirichlet problem: u = g(t, y) for |y| > L."""
    if grid.ext_policy != "dirichlet_data":
        raise InputError("solve_local needs ext_policy dirichlet_data")
    f = _check_datum(grid, f)
    times = _time_grid(t_start, T, dt)
    stepper = _Stepper(spec, grid, dt)
    cache: dict = {}

    def load_fn(t):
        if g.spatially_constant:
            key = (spec.state_key(t), float(g.value(t, np.array([grid.L]))[0]))
            if key not in cache:
                cache[key] = key[1] * stepper.operator(t).tail
            return cache[key]
        return exterior_load(spec, grid, t, g)

    ts, frames = _march(stepper, f, times, load_fn, None, save_every)
    return SolutionField(grid, ts, frames, "local_dirichlet", spec, dt,
                         {"t_start": t_start, "save_every": save_every, "exterior": g})


def solve_dual(spec: KernelSpec, grid: Grid, f_terminal, T: float, dt: float,
               t_start: float = 0.0, save_every: int = 1) -> SolutionField:
    """Backward problem from terminal data at T, marched down to t_start.

    The step is the exact adjoint of the forward step,
    ``Psi^k = (I + dt A(t_{k+1})^T)^{-1} Psi^{k+1}``, so the pairing
    ``sum h u^k Psi^k`` with a forward run is conserved to round-off.
    """
    if grid.ext_policy not in ("zero_exterior", "truncated_global"):
        raise InputError("solve_dual needs ext_policy zero_exterior or truncated_global")
    f = _check_datum(grid, f_terminal)
    times = _time_grid(t_start, T, dt)
    stepper = _Stepper(spec, grid, dt, transpose=True)
    psi = f.copy()
    out = [psi.copy()]
    out_t = [times[-1]]
    steps = len(times) - 1
    for m, k in enumerate(range(steps - 1, -1, -1), start=1):
        psi = stepper.solve(times[k + 1], psi)
        if m % save_every == 0 or k == 0:
            out.append(psi.copy())
            out_t.append(times[k])
    return SolutionField(grid, np.array(out_t[::-1]), np.array(out[::-1]), "dual", spec, dt,
                         {"t_start": t_start, "T": T, "save_every": save_every})


def rescale(field: SolutionField, tau: float, grid: Optional[Grid] = None,
            times=None) -> SolutionField:
    """v(t, x) = u(tau t, tau^(1/2s) x).

    Without ``grid``/``times`` the result is an exact relabeling onto the
    grid of half-width L / tau^(1/2s) and times t / tau. Otherwise ``v`` is
    interpolated (linearly in t and x) onto the requested points.
    """
    if not tau > 0:
        raise InputError("tau must be positive")
    s = field.kernel.s
    r = tau ** (1.0 / (2 * s))
    meta = dict(field.meta, rescaled_by=tau)
    if grid is None and times is None:
        new_grid = Grid(field.grid.L / r, field.grid.n, field.grid.ext_policy, field.grid.closure)
        return SolutionField(new_grid, field.times / tau, field.frames.copy(), field.mode,
                             field.kernel, field.dt / tau, meta)
    grid = grid or field.grid
    times = np.asarray(field.times / tau if times is None else times, float)
    tt = tau * times
    span = 1e-9 * max(1.0, abs(field.times[-1]))
    if tt.min() < field.times[0] - span or tt.max() > field.times[-1] + span:
        raise InputError("tau * times leaves the field horizon")
    if r * grid.L > field.grid.L * (1 + 1e-12):
        raise InputError("tau^(1/2s) L exceeds the field's grid")
    xs = r * grid.x
    frames = np.empty((len(times), grid.n))
    for k, t in enumerate(np.clip(tt, field.times[0], field.times[-1])):
        j = int(np.searchsorted(field.times, t))
        j = min(max(j, 1), len(field.times) - 1)
        t0, t1 = field.times[j - 1], field.times[j]
        th = (t - t0) / (t1 - t0)
        row = (1 - th) * field.frames[j - 1] + th * field.frames[j]
        frames[k] = np.interp(xs, field.x, row)
    dt = float(np.min(np.diff(times))) if len(times) > 1 else field.dt / tau
    return SolutionField(grid, times, frames, field.mode, field.kernel, dt, meta)

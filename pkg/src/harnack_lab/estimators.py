"""scikit-learn style wrappers: grid functions are rows of a 2-D array."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .discretization import Grid, apply, assemble
from .evolution import solve_cauchy
from .exceptions import InputError
from .kernels import KernelSpec


def check_grid_functions(X, n: int) -> np.ndarray:
    """Validate a batch of grid functions: finite, 2-D, ``n`` columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != n:
        raise InputError(f"expected {n} columns (grid nodes), got {X.shape[1]}")
    return X


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class _KernelGridParams(BaseEstimator):
    def _spec_grid(self):
        spec = KernelSpec(s=self.s, lam=self.lam, Lam=self.Lam, family=self.family,
                          params=dict(self.params or {}))
        grid = Grid(self.L, self.n, self.ext_policy)
        return spec, grid


class NonlocalOperator(TransformerMixin, _KernelGridParams):
    """Discrete operator at time ``t``; ``transform`` returns A u row-wise.

    ``exterior`` is a constant exterior value (0 for zero exterior data).
    """

    def __init__(self, s=0.5, lam=1.0, Lam=1.0, family="frac_laplacian", params=None,
                 L=40.0, n=1601, ext_policy="zero_exterior", t=0.0, exterior=0.0):
        self.s, self.lam, self.Lam, self.family, self.params = s, lam, Lam, family, params
        self.L, self.n, self.ext_policy, self.t, self.exterior = L, n, ext_policy, t, exterior

    def fit(self, X=None, y=None):
        spec, grid = self._spec_grid()
        self.kernel_, self.grid_ = spec, grid
        self.operator_ = assemble(spec, grid, self.t)
        self.n_features_in_ = grid.n
        return self

    def transform(self, X):
        _check_fitted(self, "operator_")
        X = check_grid_functions(X, self.grid_.n)
        return np.vstack([apply(self.operator_, row, self.exterior) for row in X])


class BackwardEulerEvolver(TransformerMixin, _KernelGridParams):
    """Maps initial data (rows) to the solution at time ``T``."""

    def __init__(self, s=0.5, lam=1.0, Lam=1.0, family="frac_laplacian", params=None,
                 L=40.0, n=1601, ext_policy="zero_exterior", T=1.0, dt=1e-3):
        self.s, self.lam, self.Lam, self.family, self.params = s, lam, Lam, family, params
        self.L, self.n, self.ext_policy, self.T, self.dt = L, n, ext_policy, T, dt

    def fit(self, X=None, y=None):
        self.kernel_, self.grid_ = self._spec_grid()
        self.n_features_in_ = self.grid_.n
        return self

    def evolve(self, f):
        _check_fitted(self, "kernel_")
        return solve_cauchy(self.kernel_, self.grid_, f, self.T, self.dt,
                            save_every=int(round(self.T / self.dt)))

    def transform(self, X):
        X = check_grid_functions(X, self.n) if not hasattr(self, "grid_") else \
            check_grid_functions(X, self.grid_.n)
        return np.vstack([self.evolve(row).frames[-1] for row in X])

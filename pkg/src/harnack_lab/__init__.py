"""Numerical laboratory for nonlocal parabolic equations with jump kernels."""
__version__ = "0.1.0"

from .discretization import ExteriorData, Grid, apply, assemble
from .evolution import SolutionField, bump, rescale, solve_cauchy, solve_dual, solve_local
from .exceptions import ConfigError, DomainError, HarnackLabError, InputError, NumericError
from .kernels import KernelSpec, evaluate, poisson_matched, verify_bounds, verify_ujs
from .sampling import SamplePlan

__all__ = ["ConfigError", "DomainError", "ExteriorData", "Grid", "HarnackLabError", "InputError",
           "KernelSpec", "NumericError", "SamplePlan", "SolutionField", "apply", "assemble",
           "bump", "evaluate", "poisson_matched", "rescale", "solve_cauchy", "solve_dual",
           "solve_local", "verify_bounds", "verify_ujs"]

"""Finite-difference solvers for a one-dimensional fractional semipositone problem.

    (-Delta)^s u = lam (u^q - 1) + mu u^r  in Omega,   u = 0 outside Omega.
"""

from .errors import (ConfigurationError, ConsistencyError, DiagnosticError, DomainError,
                     FracSemiError, InfeasibleError, MonotonicityError, NonConvergenceError,
                     UsageError)
from .fraclap import DiscreteFracLap, apply, assemble, normalization_constant, quadratic_form
from .mesh import FieldFunction, Grid, lp_norm, make_grid
from .spectral import Eigenpair, embedding_constant, principal_eigenpair

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConsistencyError",
    "DiagnosticError",
    "DiscreteFracLap",
    "DomainError",
    "Eigenpair",
    "FieldFunction",
    "FracSemiError",
    "Grid",
    "InfeasibleError",
    "MonotonicityError",
    "NonConvergenceError",
    "UsageError",
    "apply",
    "assemble",
    "embedding_constant",
    "lp_norm",
    "make_grid",
    "normalization_constant",
    "principal_eigenpair",
    "quadratic_form",
]

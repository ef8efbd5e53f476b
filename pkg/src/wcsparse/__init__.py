"""Sparse recovery with weakly convex penalties via projected
generalized-gradient iterations, with exact or approximate projections."""

from .penalty import Penalty, penalty_with_nonconvexity
from .pinv import SensingModel, ben_israel, exact_pinv, spectral_norm
from .solver import (RecoveryResult, SolverConfig, apgg_solve, irls_solve,
                     omp_solve, pgg_solve)

__all__ = [
    "Penalty", "penalty_with_nonconvexity",
    "SensingModel", "ben_israel", "exact_pinv", "spectral_norm",
    "RecoveryResult", "SolverConfig",
    "pgg_solve", "apgg_solve", "omp_solve", "irls_solve",
]

__version__ = "0.1.0"

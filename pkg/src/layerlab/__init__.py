"""Positive radial solutions of a logistic equation with sublinear boundary flux.

    -Delta u = u - u^p  in Omega,   du/dnu = mu u^q  on the boundary,
    0 < q < 1 < p,

on balls and annuli.  Modules: ``grid`` (radial discretisation), ``eigen``
(Dirichlet eigenpair and barriers), ``solver`` (Newton, monotone iteration,
continuation in mu), ``limit`` (boundary blow-up limit), ``asymptotics``
(large-mu diagnostics) and ``cli``.
"""

__version__ = "0.1.0"

from .eigen import BarrierKit, EigenPair, barrier_constants, barrier_profile, principal_eigenpair, residual_of_barrier
from .exceptions import (
    ConstantsError,
    ContinuationError,
    ConvergenceError,
    LinearAlgebraError,
    SchemeError,
    ValidationError,
)
from .grid import DomainSpec, RadialField, RadialGrid, build_grid
from .solver import ContinuationResult, ProblemParams, Solution, continue_in_mu, newton_solve

__all__ = [
    "BarrierKit",
    "ConstantsError",
    "ContinuationError",
    "ContinuationResult",
    "ConvergenceError",
    "DomainSpec",
    "EigenPair",
    "LinearAlgebraError",
    "ProblemParams",
    "RadialField",
    "RadialGrid",
    "SchemeError",
    "Solution",
    "ValidationError",
    "barrier_constants",
    "barrier_profile",
    "build_grid",
    "continue_in_mu",
    "newton_solve",
    "principal_eigenpair",
    "residual_of_barrier",
]

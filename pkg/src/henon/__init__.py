"""Numerical tools for the Henon equation -Lap u = |x|^alpha u^p on balls and perturbed balls."""

from .errors import (ConvergenceError, ForbiddenExponentError, HenonError, InvalidConfigError,
                     SolverError, SupercriticalError, TrustBallError)
from .problem import ProblemParams, critical_exponent
from .radial import solve_henon_radial

__all__ = [
    "ConvergenceError", "ForbiddenExponentError", "HenonError", "InvalidConfigError",
    "ProblemParams", "SolverError", "SupercriticalError", "TrustBallError", "critical_exponent",
    "solve_henon_radial",
]

"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class HenonError(Exception):
    exit_code = 5


class InvalidConfigError(HenonError, ValueError):
    """Parameters violate a precondition (bad N, alpha, p, t, ...)."""

    exit_code = 4


class SupercriticalError(InvalidConfigError):
    """p >= p_alpha(N): no positive radial solution exists."""


class ForbiddenExponentError(HenonError):
    """The radial solution is (numerically) degenerate at this exponent."""

    exit_code = 2

    def __init__(self, message, mode=None, value=None):
        super().__init__(message)
        self.mode = mode
        self.value = value


class ConvergenceError(HenonError):
    """An iteration failed to converge; ``kappa`` holds the measured factor if known."""

    exit_code = 3

    def __init__(self, message, kappa=None):
        super().__init__(message)
        self.kappa = kappa


class TrustBallError(ConvergenceError):
    """The fixed-point iterate left the region where v_p + phi stays positive."""


class SolverError(HenonError):
    """Integrator or eigensolver failure."""

    exit_code = 5

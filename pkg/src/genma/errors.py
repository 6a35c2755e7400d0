"""Exception hierarchy shared by the solver and the command line."""


class GmaError(Exception):
    """Base class for solver errors."""


class InvalidProblem(GmaError, ValueError):
    """Problem data violate a structural hypothesis (positivity, cone, mass)."""

    def __init__(self, message, check=None):
        super().__init__(message)
        self.check = check


class AdmissibilityError(GmaError):
    """``omega_phi`` (or the cone form) lost positivity somewhere on the grid."""

    def __init__(self, message, point=None, min_eigenvalue=None):
        super().__init__(message)
        self.point = point
        self.min_eigenvalue = min_eigenvalue


class NewtonFailure(GmaError):
    """Newton iteration did not reach the tolerance."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class PathFailure(GmaError):
    """Continuation step size underflowed; carries the partial trace."""

    def __init__(self, message, trace=None, collapsed=None):
        super().__init__(message)
        self.trace = trace
        self.collapsed = collapsed

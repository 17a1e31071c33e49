"""Exception and warning types shared across the package."""


class DoublePhaseError(Exception):
    """Base class for all package errors."""


class FieldMismatchError(DoublePhaseError):
    """A field or per-element array does not match the mesh it is used with."""


class DegenerateGradientError(DoublePhaseError):
    """A gradient field vanishes where a nondegenerate one is required."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class EllipticityError(DoublePhaseError):
    """A coefficient matrix field is not symmetric positive definite."""


class OrderingError(DoublePhaseError):
    """Boundary data violate the ordering required by a comparison check."""


class SolverError(DoublePhaseError):
    """Base class for solver failures."""


class NewtonError(SolverError):
    """Energy minimization did not converge; carries the last iterate."""

    def __init__(self, message, iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.iterations = iterations


class LinearSolveError(SolverError):
    """A sparse linear solve failed; carries the iteration count."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class IncompleteLatticeError(DoublePhaseError):
    """Frequency samples do not cover the full dual lattice."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class ConfigError(DoublePhaseError):
    """A run configuration is unparseable or out of range."""


class DegenerateGradientWarning(UserWarning):
    """Continuation by zero was used at a degenerate point of the flux."""

"""Exception hierarchy shared by the solver modules."""


class LmmgError(Exception):
    """Base class for all solver errors."""


class InvalidInputError(LmmgError, ValueError):
    """Malformed geometry, mismatched spaces or out-of-domain queries."""


class ConfigurationError(LmmgError, ValueError):
    """Inconsistent solver configuration (quadrature degree, parameters, ...)."""


class ConvergenceError(LmmgError):
    """An iterative linear solver did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateDirectionError(LmmgError):
    """A direction collapsed onto the subspace L during projection."""


class PeakSelectionError(LmmgError):
    """The peak selection could not locate a maximiser on the half space."""


class BoundaryDegeneracyError(PeakSelectionError):
    """The maximiser was pinned at the lower bound of the ray coefficient."""


class StepSizeError(LmmgError):
    """No admissible step size satisfied the descent condition."""


class IterationCapError(LmmgError):
    """The minimax loop on one Galerkin space hit its iteration cap."""

"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid parameters, configuration or input data."""


class GridMismatchError(ValidationError):
    """Two series or accumulators do not share the same time grid."""


class DivergedTrajectoryError(RuntimeError):
    """A trajectory state is non-finite or beyond the divergence limit."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class OracleInvariantError(RuntimeError):
    """A master-equation invariant (trace, hermiticity) was violated."""


class TruncationError(OracleInvariantError):
    """Fock-space truncation is inadequate for the evolving state."""


class HermiticityError(OracleInvariantError):
    """An expectation value that must be real has a large imaginary part."""

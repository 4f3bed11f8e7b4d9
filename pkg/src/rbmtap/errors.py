"""Exception hierarchy shared by all modules."""


class RbmTapError(Exception):
    """Base class for library errors."""


class UsageError(RbmTapError, ValueError):
    """Bad arguments or missing inputs."""


class DimensionError(UsageError):
    """Invalid matrix dimensions."""


class DomainError(RbmTapError, ValueError):
    """Argument outside the mathematical domain of a function."""


class PoleProximityError(DomainError):
    """Green function evaluated inside or too close to the spectrum."""

    def __init__(self, z, d_max, gap):
        self.z, self.d_max, self.gap = z, d_max, gap
        super().__init__(
            f"z={z!r} is not safely above the spectrum (max eigenvalue {d_max!r}, gap {gap!r})"
        )


class NumericalError(RbmTapError, ArithmeticError):
    """A numerical routine failed or produced inconsistent values."""


class SingularThetaError(NumericalError):
    """The coefficient matrix denominator vanished (spectral-edge contact)."""


class InvertibilityError(NumericalError):
    """The block operator is not invertible for the given order parameters."""


class ConvergenceError(RbmTapError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None, trajectory=None):
        self.residual = residual
        self.trajectory = trajectory
        super().__init__(message)


class InstabilityError(NumericalError):
    """The message-passing iteration diverged."""

"""Exception types shared across the package."""


class DrsmpcError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(DrsmpcError):
    """Operands have inconsistent shapes."""


class DomainError(DrsmpcError):
    """A scalar argument lies outside its admissible range."""


class NonContractive(DrsmpcError):
    """Fixed-point iteration diverged; the iteration matrix is not Schur stable."""


class NotPsd(DrsmpcError):
    """A matrix required to be positive semidefinite has a negative eigenvalue."""


class NoConvergence(DrsmpcError):
    """An iterative solve stalled before reaching its tolerance."""


class EmptySampleSet(DrsmpcError):
    """A sample-based operation received zero samples."""


class InfeasibleRadius(DrsmpcError):
    """The transport budget theta * lambda exceeds the risk level epsilon."""


class AllocationError(DrsmpcError):
    """Per-row risk levels exceed the total violation budget."""


class BadProblem(DrsmpcError):
    """A QP is malformed (NaN entries, asymmetry, or inconsistent dimensions)."""


class TightenedSetEmpty(DrsmpcError):
    """Constraint tightening produced an empty nominal constraint set."""


class InitialInfeasible(DrsmpcError):
    """The first MPC problem admits no feasible nominal plan."""


class ConfigError(DrsmpcError):
    """A configuration file could not be parsed or validated."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

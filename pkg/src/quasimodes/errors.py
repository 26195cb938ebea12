"""Exception types shared across the package."""


class QuasimodeError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(QuasimodeError):
    """Operands live on different grids or have incompatible shapes."""


class DomainError(QuasimodeError):
    """An argument lies outside the mathematically valid range."""


class MultiplicityError(QuasimodeError):
    """An eigenvalue assumed simple is (numerically) degenerate."""


class SolverError(QuasimodeError):
    """An iterative or direct solve failed to reach its tolerance."""


class TruncationError(QuasimodeError):
    """A series/grid truncation is too short for the requested output."""


class ResonanceSuspectError(QuasimodeError):
    """The non-resonance check landed in the inconclusive gray zone."""


class ConfigError(QuasimodeError):
    """A job configuration file is malformed or inconsistent."""

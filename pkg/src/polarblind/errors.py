"""Exception types shared across the library.

Every failure mode that callers are expected to handle gets its own class so
that simulation harnesses can distinguish "this trial degenerated" from a
plain programming error.
"""


class PolarBlindError(Exception):
    """Base class for all library-specific errors."""


class ConfigError(PolarBlindError):
    """A configuration value is missing, malformed, or inconsistent."""


class DimensionMismatchError(PolarBlindError, ValueError):
    """Array shapes do not conform to the documented contract."""


class RankDeficientError(PolarBlindError):
    """A matrix that must have full column rank is numerically rank deficient."""


class NoConvergenceError(PolarBlindError):
    """An iterative kernel failed to converge within its iteration budget."""


class InvalidGridError(PolarBlindError, ValueError):
    """Dictionary grid parameters are invalid (bad sizes or distances)."""


class InvalidOrderError(PolarBlindError, ValueError):
    """Unsupported constellation order."""


class SeparabilityError(PolarBlindError, ValueError):
    """Frame too short to separate the users: requires T >= K*(S+1)."""


class ExhaustedError(PolarBlindError):
    """Atom selection ran out of admissible dictionary columns."""


class MaxItersExceededError(PolarBlindError):
    """Residual-threshold stopping never triggered within the iteration cap."""


class ZeroPilotEstimateError(PolarBlindError):
    """Estimated pilot entry is numerically zero; phase alignment impossible."""


class DegenerateDataError(PolarBlindError):
    """Data-symbol estimate has numerically zero norm."""


class DegenerateChannelError(PolarBlindError):
    """Channel estimate has numerically zero norm."""

"""Exception types shared across the package."""


class LevyBarrierError(Exception):
    """Base class for all package errors."""


class InvalidModel(LevyBarrierError):
    """Model specification is degenerate or outside the supported class."""


class NonConvexSpec(LevyBarrierError):
    """Cost specification violates convexity."""


class NonFiniteSample(LevyBarrierError):
    """A pathwise functional evaluated to NaN or infinity."""


class NoSignChange(LevyBarrierError):
    """Bracket expansion found no sign change of rho(b) + C within bounds."""


class AssumptionViolated(LevyBarrierError):
    """A solver precondition on the problem or model does not hold."""


class NotSpectrallyNegative(LevyBarrierError):
    """Oracle requested for a model with positive jumps or monotone paths."""


class ConfigError(LevyBarrierError):
    """CLI configuration failed validation. Message names the offending path."""

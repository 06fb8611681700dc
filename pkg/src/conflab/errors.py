"""Exception types raised across the package."""


class ConflabError(Exception):
    """Base class for all package errors."""


class ChartSingularity(ConflabError, ValueError):
    """A sphere chart point sits on (or too close to) a coordinate pole."""


class NotEmbedded(ConflabError, TypeError):
    """The operation needs an embedded sphere but got a circle product."""


class NotASphere(ConflabError, TypeError):
    pass


class ResolutionTooSmall(ConflabError, ValueError):
    pass


class NonFiniteDerivative(ConflabError, FloatingPointError):
    pass


class DegenerateBasis(ConflabError, ValueError):
    """Variation-field basis is numerically dependent in L^2."""


class StepFailure(ConflabError, RuntimeError):
    """Backtracking shrank the flow step below the allowed minimum."""


class UnknownPreset(ConflabError, KeyError):
    pass


class ConfigError(ConflabError, ValueError):
    pass

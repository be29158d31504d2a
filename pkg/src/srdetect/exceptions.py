"""Exception hierarchy shared by all modules."""


class SRDetectError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(SRDetectError, ValueError):
    """Invalid user-supplied configuration (thresholds, grid sizes, names)."""


class DomainError(SRDetectError, ValueError):
    """Argument outside the mathematical domain of a function."""


class UnsupportedModelError(SRDetectError):
    """The model lacks what an operation needs (e.g. a smooth kernel)."""


class NumericalError(SRDetectError, RuntimeError):
    """A numerical routine failed to converge or lost conditioning."""


class CalibrationError(NumericalError):
    """No threshold bracket could be found for the requested ARL."""


class ResolutionError(NumericalError):
    """A truncated domain is too short for the requested accuracy."""


class DesignError(NumericalError):
    """Head-start design equation has no root in the searched range."""

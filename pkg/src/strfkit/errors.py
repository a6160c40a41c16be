"""Exception and warning types shared across the package."""


class StrfkitError(Exception):
    """Base class for all strfkit errors."""


class InvalidInput(StrfkitError):
    """Input data violates an operation's precondition."""


class InvalidConfig(StrfkitError):
    """Configuration values are inconsistent or out of range."""


class NumericalError(StrfkitError):
    """A computation produced non-finite values."""

    def __init__(self, message, filter_index=None):
        super().__init__(message)
        self.filter_index = filter_index


class DivergedError(StrfkitError):
    """Training loss exceeded the divergence ceiling.

    Carries the last stable parameter snapshot so callers can recover it.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class DegenerateDistribution(StrfkitError):
    """A population statistic is undefined for this point set."""


class DegenerateAxis(UserWarning):
    """An axis had zero pooled variance and was left unscaled."""


class ConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap before reaching tolerance."""

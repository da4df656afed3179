"""Exception hierarchy shared by every module."""


class TMatrixError(Exception):
    """Base class for all errors raised by this package."""


class BudgetError(TMatrixError):
    """A query needs more sieving (or oracle work) than the configured budget allows."""


class UsageError(TMatrixError, ValueError):
    """Malformed arguments, e.g. an empty or inverted range."""


class DomainError(TMatrixError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class NotInRowError(DomainError):
    """The value does not occur in the requested matrix row."""


class EmptySetError(DomainError):
    """The active set is empty, so the requested quantity does not exist."""


class WidthError(TMatrixError, OverflowError):
    """A value exceeds the supported integer width."""

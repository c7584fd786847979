class PsidimError(Exception):
    """Base class for all package errors."""


class ValidationError(PsidimError, ValueError):
    """Input violates a documented precondition."""


class Overbudget(PsidimError):
    """An exhaustive search would exceed its caller-supplied budget.

    Raised instead of returning an approximation, so every returned
    result is exact.
    """


class UsageError(PsidimError):
    """Bad command-line usage or unknown configuration key."""

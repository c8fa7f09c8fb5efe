"""Exception hierarchy for the toolkit.

All toolkit errors derive from :class:`OpsysKitError` so callers can
distinguish them from built-in errors.
"""


class OpsysKitError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(OpsysKitError):
    """Raised when matrix or coefficient dimensions are inconsistent or empty."""


class LevelError(OpsysKitError):
    """Raised when a matrix level above a space's level cap is requested."""


class DomainError(OpsysKitError):
    """Raised when an operation's mathematical preconditions are violated."""


class ConstructionError(OpsysKitError):
    """Raised when an object cannot be built from the given data."""


class SizeError(OpsysKitError):
    """Raised when a problem exceeds the documented desk-scale engine caps."""


class ConvergenceError(OpsysKitError):
    """Raised when an iterative routine fails to converge.

    Carries the best iterate found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FormulaLookupError(OpsysKitError, KeyError):
    """Raised for an unknown formula-library name."""


class InputFormatError(OpsysKitError):
    """Raised for malformed input files (bad JSON, wrong schema tag)."""


class NumericalFailure(OpsysKitError):
    """Raised when a numerical subroutine reports failure.

    Carries diagnostic data in ``detail``.
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail

"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: usage/config problems exit 1, failed
numerical checks exit 2, numeric breakdowns exit 3.
"""


class NlsNormError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(NlsNormError, ValueError):
    pass


class NumericError(NlsNormError, ArithmeticError):
    pass


class NoLocalGeometry(NumericError):
    """The fiber map lost its two critical points (mass too large for the well)."""


class ConvergenceFailure(NumericError):
    pass


class SearchFailure(NumericError):
    pass


class CheckFailure(NlsNormError):
    """An inequality asserted by the theory failed numerically."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: invalid input -> 2, numeric or
estimation failure -> 3, optimizer budget exhaustion -> 4.
"""


class PvDisaggError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PvDisaggError, ValueError):
    """Input violates a documented precondition or file schema."""


class NumericFailureError(PvDisaggError, ArithmeticError):
    """A linear-algebra or numeric step failed (e.g. non-PD covariance)."""


class EstimationFailureError(PvDisaggError, RuntimeError):
    """A statistical estimator could not produce a valid value."""

"""Exception hierarchy shared across the package.

The CLI maps ValidationError to exit code 2 and NumericError to exit code 3.
"""


class BalanceBoundsError(Exception):
    """Base class for all package errors."""


class ValidationError(BalanceBoundsError):
    """Bad input data, violated preconditions, or contract misuse."""


class DomainError(ValidationError):
    """A function was evaluated outside its tabulated/supported domain."""


class NumericError(BalanceBoundsError):
    """Numerical failure: singular Gram, degenerate index, non-convergence."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, anything raised
below (bad data, domain violations, failed numerics) exits 2.
"""


class PlumefrontError(Exception):
    """Base class for all package errors."""


class DomainError(PlumefrontError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(PlumefrontError, ValueError):
    """Input data is malformed, inconsistent, or missing required columns."""


class InsufficientDataError(DataError):
    """Too few observations for the requested statistical operation."""


class NumericalError(PlumefrontError, RuntimeError):
    """A numerical routine failed to reach its accuracy or stability target."""


class FitError(NumericalError):
    """An iterative fit did not converge within its iteration budget."""


class NonMonotoneFieldWarning(UserWarning):
    """A field expected to decay monotonically in radius did not; the first
    threshold crossing is reported and may not be unique."""

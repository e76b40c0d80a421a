"""Exception hierarchy shared across the package.

The command line maps these onto process exit codes, so raising the right
subclass matters: ParameterError -> 1, DataError -> 2, NumericalError -> 3.
"""


class SslogitError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SslogitError):
    """Invalid argument, configuration value, or grid specification."""


class DataError(SslogitError):
    """Malformed, empty, or inconsistent input data."""


class NumericalError(SslogitError):
    """Linear algebra failure that survives the defensive retries."""

"""
Exception hierarchy shared by the dtscat modules.

Each module raises its own subclass; the CLI turns ``exit_code`` into the
process status.
"""


class DtscatError(Exception):
    """Base class for all dtscat errors."""
    exit_code = 1


class UsageError(DtscatError):
    """Invalid arguments or configuration."""
    exit_code = 2


class DataError(DtscatError):
    """Malformed input data or artifact files."""
    exit_code = 3


class NumericalError(DtscatError):
    """Numerical procedure could not produce a result."""
    exit_code = 4

"""Exception hierarchy shared across the package."""


class SynapCountError(Exception):
    """Base class for every error this package raises on purpose."""


class InputError(SynapCountError):
    """Bad input data: unreadable files, parse failures, schema violations.

    The CLI maps this class to exit code 2.
    """


class DimensionMismatchError(InputError):
    """Rasters that must share dimensions do not."""

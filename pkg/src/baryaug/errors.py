"""Exception hierarchy shared by the library and the command line."""


class BaryaugError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(BaryaugError, ValueError):
    """Malformed or out-of-range input (bad files, invalid parameters)."""

    exit_code = 2


class ConvergenceError(BaryaugError, ArithmeticError):
    """A numerical routine diverged or produced non-finite values."""

    exit_code = 3


class ResourceError(BaryaugError):
    """A size or count limit was exceeded."""

    exit_code = 4


class SizeLimitError(ResourceError):
    """Problem too large for an exact solver."""

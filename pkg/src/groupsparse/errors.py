"""Exception types shared across the package."""


class GroupSparseError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(GroupSparseError, ValueError):
    """Invalid parameters, e.g. a stepsize that breaks the descent condition."""


class NumericalError(GroupSparseError, ArithmeticError):
    """Non-finite iterates, failed convergence, or rank deficiency."""


class PreconditionError(GroupSparseError, ValueError):
    """An input violates a documented precondition of an operation."""


class InputError(GroupSparseError, OSError):
    """A data file is missing, unreadable, or malformed."""

"""Error categories shared by every toruslab module.

The CLI maps each category to an exit code, so module-specific exceptions
subclass exactly one of these.
"""


class ToruslabError(Exception):
    """Base class for all toruslab errors."""

    exit_code = 1


class ParseError(ToruslabError):
    """Raised when textual input (matrices, shifts, grids) cannot be parsed."""

    exit_code = 2


class ConfigError(ToruslabError):
    """Raised when a run configuration is out of its documented ranges."""

    exit_code = 2


class BudgetError(ToruslabError):
    """Raised when a computation exceeds its configured budget."""

    exit_code = 3


class PreconditionError(ToruslabError):
    """Raised when an operation is called outside its precondition."""

    exit_code = 4


class ComputationError(ToruslabError):
    """Raised when a numerical procedure fails to produce a result."""

    exit_code = 1

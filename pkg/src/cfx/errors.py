"""Exception hierarchy shared by all cfx modules."""


class CfxError(Exception):
    """Base class for every error raised by cfx."""


class InputError(CfxError, ValueError):
    """Arguments violate an operation's preconditions (shape, range, emptiness)."""


class PreconditionError(InputError):
    """The call is well-formed but the model state forbids it."""


class FormatError(CfxError, ValueError):
    """A serialized payload (model JSON, CSV, config) is malformed."""

    def __init__(self, message, row_errors=None):
        super().__init__(message)
        self.row_errors = list(row_errors or [])


class NumericError(CfxError, ArithmeticError):
    """A computation produced a non-finite intermediate."""


class BudgetError(CfxError, RuntimeError):
    """The oracle's query budget is exhausted."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = list(partial or [])


class ResourceError(CfxError, MemoryError):
    """A requested computation exceeds its memory budget."""


class ConfigError(CfxError, ValueError):
    """An experiment configuration is invalid; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path

"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class FormatError(ValueError):
    """A binary input file is malformed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss or gradient."""


class ConfigError(ValueError):
    """A run configuration is invalid."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)


class CheckpointError(ValueError):
    """A checkpoint does not match the model it is loaded into."""

"""Exception types shared across the package."""


class FedHetError(Exception):
    """Base class for every error raised deliberately by this package."""


class InputError(FedHetError, ValueError):
    """A caller violated an operation's precondition."""


class FormatError(FedHetError, ValueError):
    """A binary file did not match its expected layout.

    ``offset`` is the byte position where parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NumericError(FedHetError, ArithmeticError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class ConfigError(FedHetError, ValueError):
    """Experiment configuration is malformed; ``key`` is the dotted key path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class InternalError(FedHetError, RuntimeError):
    """An internal contract between two stages was broken."""


class StageError(FedHetError, RuntimeError):
    """Wraps an error raised inside a protocol stage, tagging which stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

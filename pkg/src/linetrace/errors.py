"""Exception hierarchy shared by all linetrace modules."""


class LinetraceError(Exception):
    """Base class for all library errors."""


class ParameterError(LinetraceError, ValueError):
    """A caller-supplied parameter violates an operation's precondition."""


class GenerationError(LinetraceError):
    """A synthetic sample could not be generated from the given spec."""


class NoLineDetected(LinetraceError):
    """Stage-1 produced an empty mask; there is nothing to anchor patches on."""


class ExchangeError(LinetraceError):
    """The external file-exchange adapter failed (timeout, missing files)."""

    def __init__(self, message: str, uuid: str | None = None):
        super().__init__(message)
        self.uuid = uuid


class ProtocolError(LinetraceError):
    """Exchange request/response violates the protocol schema or version."""


class StageError(LinetraceError):
    """Wraps an error raised inside a pipeline stage with its stage tag."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(LinetraceError, ValueError):
    """Invalid or unknown configuration content."""

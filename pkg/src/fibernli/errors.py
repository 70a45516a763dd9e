"""Exception types raised across the package."""


class FiberNLIError(Exception):
    """Base class for all package errors."""


class ParameterError(FiberNLIError, ValueError):
    """A physical or numerical parameter is outside its valid range."""


class UsageError(FiberNLIError, ValueError):
    """An operation was called outside its supported domain."""


class DataError(FiberNLIError, ValueError):
    """Input data is too short or malformed for the requested estimate."""


class ConfigError(FiberNLIError, ValueError):
    """A configuration file or sweep axis is invalid.

    The offending key is kept on ``key`` so the CLI can report it.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class SchemaError(FiberNLIError, ValueError):
    """A CSV file is missing a required column."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class SimulationError(FiberNLIError, RuntimeError):
    """The split-step solver produced non-finite samples.

    ``step`` is the global step index at which it was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

"""Exception types shared across the package."""


class NextactionError(Exception):
    """Base class for all errors raised by this package."""


class MalformedRecordError(NextactionError):
    """A raw event-log line that does not match the record format."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class ConfigError(NextactionError):
    """An invalid configuration value."""


class UnfittedModelError(NextactionError):
    """A prediction was requested from a model with no observations."""


class DuplicateItemError(NextactionError):
    """A course-order file lists the same token more than once."""


class NumericalFaultError(NextactionError):
    """Non-finite values were fed into a numerical routine."""

"""Exception hierarchy shared across the package.

The CLI maps each family onto an exit code, so new errors should subclass
one of the three roots below.
"""


class IupeError(Exception):
    """Base class for every error raised by this package."""


class UsageError(IupeError):
    """Caller misuse: bad arguments, stepping a finished episode."""


class ConfigError(IupeError):
    """Inconsistent configuration: shape mismatches, degenerate baselines."""


class InputError(IupeError):
    """Invalid data handed to an operation (empty sets, bad labels)."""


class DemoFormatError(InputError):
    """Malformed demonstration or layout file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ExpertQualityError(IupeError):
    """Scripted expert could not produce enough successful episodes."""


class NumericalError(IupeError):
    """Non-finite values appeared during a computation."""

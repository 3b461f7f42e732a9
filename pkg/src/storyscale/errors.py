"""Exception types shared across the package."""


class StoryscaleError(Exception):
    """Base class for all errors raised by this package."""


class SpecParseError(StoryscaleError):
    """Malformed story document. Carries the offending line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(StoryscaleError):
    """A value or configuration violates a documented precondition."""


class StateError(StoryscaleError):
    """An operation was applied to an object in the wrong state."""


class DegenerateInputError(StoryscaleError):
    """Zero-norm input where a direction or ratio is required."""


class SynchronizationError(StoryscaleError):
    """The unconditional branch ran without its conditional-branch record."""


class IntegrityError(StoryscaleError):
    """An output failed a digest or fixed-point consistency check."""

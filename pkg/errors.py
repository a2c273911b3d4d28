"""
Exception hierarchy for the CRR laboratory.

Every failure raised on purpose by this package derives from CrrLabError so the
CLI can report it uniformly.
"""


class CrrLabError(Exception):
    """Base class for all package errors."""


class InputError(CrrLabError, IndexError):
    """An index or argument lies outside its valid range."""


class ValidationError(CrrLabError, ValueError):
    """Data violates a structural assumption (coherence, rewards, dimensions)."""


class ConfigurationError(CrrLabError, ValueError):
    """A configuration value is invalid or inconsistent with the data."""


class NumericError(CrrLabError, ArithmeticError):
    """A non-finite value reached a computation that requires finite input."""


class PreconditionError(CrrLabError, ValueError):
    """An operation was called in a state it cannot handle (e.g. empty data)."""


class InternalError(CrrLabError, RuntimeError):
    """An internal invariant was broken."""


class ParseError(CrrLabError, ValueError):
    """A text file could not be parsed."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)

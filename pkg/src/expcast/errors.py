"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: validation problems exit 1,
transport problems exit 2, anything else exits 3.
"""
from __future__ import annotations


class ExpcastError(Exception):
    """Base class for all package errors."""


class ValidationError(ExpcastError, ValueError):
    """Bad input: wrong shapes, non-finite values, violated preconditions."""


class InsufficientLengthError(ValidationError):
    def __init__(self, required: int, available: int):
        super().__init__(f"insufficient length: need {required} points, have {available}")
        self.required = required
        self.available = available


class IngestError(ValidationError):
    """Dataset file problems. ``row`` is 1-based over data rows when known."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class MemoryFileError(ValidationError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SeparationError(ValidationError):
    """Attempted memory-content mutation outside the training phase."""


class LawCompileError(ValidationError):
    pass


class AnswerParseError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class TransportError(ExpcastError):
    """The LLM backend could not be reached or kept failing."""

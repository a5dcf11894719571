"""Exception types shared across the package.

Everything raised on bad input data derives from :class:`RqamonError`, so the
command line layer can map any of them to a single "data/validation" exit
code without enumerating causes.
"""

from __future__ import annotations


class RqamonError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(RqamonError):
    """Bad command line invocation (unknown flag, missing argument)."""


class CsvFormatError(RqamonError):
    """A CSV stream violates the expected layout.

    ``row`` is the 0-based row index (0 is the header) when the problem is
    attributable to a single row, otherwise ``None``.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ValidationError(RqamonError):
    """Input violates a documented precondition."""


class DegenerateModelError(RqamonError):
    """Projection model cannot be fitted (covariance numerically zero)."""


class CompatibilityError(RqamonError):
    """Artifacts produced with mismatched parameters were combined."""


class FaultInjectionError(RqamonError):
    """Fault transform failed to honour one of its output guarantees."""

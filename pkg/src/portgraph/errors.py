"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PortgraphError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PortgraphError):
    """Invalid input: out-of-range values, malformed files, bad configuration."""


class CsvParseError(ValidationError):
    """A CSV row could not be parsed; carries the line number and field name."""

    def __init__(self, message: str, *, line: int, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class DegenerateGeometryError(ValidationError):
    """Geometry input too thin to work with (fewer than 3 points, collinear, ...)."""


class NumericError(PortgraphError):
    """A computation produced NaN/Inf or otherwise diverged."""

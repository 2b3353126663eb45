"""Exception and warning types shared across the package."""

from __future__ import annotations


class SteinBicountError(Exception):
    """Base class for all package errors."""


class InvalidParams(SteinBicountError, ValueError):
    """Distribution parameters violate a family constraint."""


class UnsupportedParams(SteinBicountError, ValueError):
    """Parameters are valid but the requested operation does not cover them."""


class ParseError(SteinBicountError, ValueError):
    """A distribution string or input file could not be parsed."""


class TruncationError(SteinBicountError, ArithmeticError):
    """The probability mass outside a finite grid exceeds the tolerance."""


class DegenerateSample(SteinBicountError, ArithmeticError):
    """A statistic is undefined on the given data (zero variance or denominator)."""


class NumericalHealthWarning(RuntimeWarning):
    """Recursion produced rounding noise larger than expected."""

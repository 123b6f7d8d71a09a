"""Exception hierarchy shared by every module."""


class HorqError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeError(HorqError, ValueError):
    """Operand shapes or convolution geometry are inconsistent."""


class DomainError(HorqError, ValueError):
    """A value lies outside the domain an operation accepts."""


class FormatError(HorqError):
    """A file does not match the expected binary layout."""


class ConfigError(HorqError, ValueError):
    """Invalid trainer or model configuration."""

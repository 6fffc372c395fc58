"""Exception types shared across the package."""


class LimitrecError(Exception):
    """Base class for package errors."""


class ConfigError(LimitrecError):
    """Invalid configuration or command-line arguments."""


class DataFormatError(LimitrecError):
    """An interaction file could not be parsed."""


class NumericError(LimitrecError):
    """A numeric computation produced non-finite values."""

"""Exception types shared across the package."""


class CadpError(Exception):
    """Base class for package errors."""


class ConfigurationError(CadpError):
    """Invalid configuration: unknown keys, bad values, malformed files."""


class UsageError(CadpError):
    """An API was called in a way its contract forbids."""


class NumericError(CadpError):
    """A numeric invariant was violated (non-finite values and the like)."""

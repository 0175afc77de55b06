"""Exception hierarchy shared by every module."""


class RiverGNNError(Exception):
    """Base class for all package errors."""


class DomainError(RiverGNNError, ValueError):
    """An argument lies outside the operation's domain."""


class IntegrityError(RiverGNNError):
    """Input data contradicts a structural guarantee it is supposed to satisfy."""


class NumericError(RiverGNNError, ArithmeticError):
    """A computation produced a non-finite value."""


class ConfigError(RiverGNNError, ValueError):
    """An illegal combination of configuration values."""


class DataError(RiverGNNError):
    """Unreadable, missing or malformed input files."""

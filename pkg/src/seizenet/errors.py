"""Exception types shared across the package."""


class SeizenetError(Exception):
    """Base class for all package errors."""


class DimensionError(SeizenetError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(SeizenetError, ValueError):
    """A configuration is invalid or inconsistent."""


class SignalError(SeizenetError, ValueError):
    """A signal record is malformed or too short."""


class MontageError(SignalError):
    """The record does not have the expected channel count."""


class FormatError(SeizenetError, ValueError):
    """A file does not follow its binary or text format."""


class NonFiniteError(SeizenetError, FloatingPointError):
    """A loss or gradient became NaN or infinite."""

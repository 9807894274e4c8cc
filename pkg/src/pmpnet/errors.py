class PmpNetError(Exception):
    """Base class for package errors."""


class ShapeError(PmpNetError):
    """Operand shapes do not satisfy an operation's contract."""


class ParameterError(PmpNetError):
    """A scalar argument or call mode is out of its allowed range."""


class ConfigError(PmpNetError):
    """An experiment configuration fails validation."""


class FormatError(PmpNetError):
    """A serialized file cannot be parsed."""

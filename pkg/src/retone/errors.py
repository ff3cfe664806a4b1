"""Exception types shared across the package."""


class RetoneError(Exception):
    """Base class for all errors raised by this package."""


class ImageFormatError(RetoneError):
    """File could not be decoded, or uses an unsupported format/mode."""


class ParameterError(RetoneError):
    """An operation was called with out-of-contract arguments."""


class ShapeError(RetoneError):
    """Tensor or image shapes do not satisfy an operation's contract."""


class NumericsError(RetoneError):
    """A computation produced non-finite values."""


class WeightsFormatError(RetoneError):
    """A weights container is malformed or inconsistent."""

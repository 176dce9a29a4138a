"""Exception hierarchy shared by every module of the package."""


class SpfError(Exception):
    """Base class for all errors raised by spfrecon."""


class ShapeError(SpfError, ValueError):
    """Array dimensions are inconsistent or unsupported (e.g. non-cubic)."""


class SizeError(ShapeError):
    """Grid too large to address."""


class SymmetryError(SpfError, ValueError):
    """A spectrum expected to be Hermitian is not."""


class DegenerateInputError(SpfError, ValueError):
    """Input carries no usable signal (all zero, constant, flat histogram)."""


class FormatError(SpfError, ValueError):
    """File does not follow the expected layout."""


class LengthError(FormatError):
    """File payload is truncated or has trailing bytes."""


class DataError(FormatError):
    """File payload contains non-finite values."""


class MissingFileError(SpfError, FileNotFoundError):
    """A file referenced by a manifest does not exist."""


class ConfigError(SpfError, ValueError):
    """Invalid configuration key or value."""

"""Exception types raised across the package."""


class CpofError(Exception):
    """Base class for all package errors."""


class SizeError(CpofError, ValueError):
    """Array length or shape is not acceptable (e.g. not a power of two)."""


class ParameterError(CpofError, ValueError):
    """A scalar parameter is out of its valid range."""


class DegenerateInputError(CpofError, ValueError):
    """Input carries no usable information (e.g. an all-zero image)."""


class UnsupportedModeError(CpofError, ValueError):
    """The requested combination of options is not supported."""


class FormatError(CpofError, ValueError):
    """A file does not follow the expected binary or text layout."""


class CongestionError(CpofError, RuntimeError):
    """Random target placement could not find free space."""

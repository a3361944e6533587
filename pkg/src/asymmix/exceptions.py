"""Exception hierarchy shared by every module."""


class AsymmixError(Exception):
    """Base class for all package errors."""


class ContractViolation(AsymmixError, ValueError):
    """Raised when a caller breaks an operation's preconditions
    (shape mismatch, empty data, too few samples, ...)."""


class ModelLoadError(AsymmixError, ValueError):
    """Base class for failures while reading a persisted model."""


class MalformedModelError(ModelLoadError):
    """The byte stream is truncated or does not parse."""


class ModelVersionError(ModelLoadError):
    """The stream declares an unsupported ``format_version``."""


class ModelInvariantError(ModelLoadError):
    """The stream parses but the parameters are not a valid model."""


class ImageReadError(AsymmixError, OSError):
    """An image file is missing or cannot be decoded."""


class UnsupportedDepthError(AsymmixError, ValueError):
    """An image file is not 8 bits per channel."""

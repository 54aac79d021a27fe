"""Exception hierarchy shared across the pipeline."""


class SaecryptError(Exception):
    """Base class for every error raised by this package."""


class FormatError(SaecryptError, ValueError):
    """A file or byte payload does not follow its on-disk layout."""


class CorruptFileError(FormatError):
    """Bad magic, truncated payload, or inconsistent header arithmetic."""


class VersionMismatchError(FormatError):
    """The file declares a format version this build cannot read."""


class UnsupportedFormatError(FormatError):
    """Image container or pixel layout outside PNG/PGM/PPM at 8 bits."""


class DimensionError(SaecryptError, ValueError):
    """Array shapes that should agree do not."""


class InvalidKeyError(SaecryptError, ValueError):
    """Chaotic key parameters fall outside their admissible ranges."""


class DegenerateKeystreamError(SaecryptError, ArithmeticError):
    """The logistic orbit kept collapsing after every perturbation attempt."""


class UndefinedCorrelationError(SaecryptError, ArithmeticError):
    """Correlation asked for on data with zero variance."""


class LengthMismatchError(CorruptFileError):
    """Payload length disagrees with what the header promises."""

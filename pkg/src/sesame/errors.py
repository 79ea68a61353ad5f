"""Exception types shared across the toolkit."""


class SesameError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SesameError):
    """A scenario or model configuration is invalid (CLI exit code 1)."""


class AlignmentError(SesameError):
    """A time interval is not an integral multiple of the underlying grid."""


class RateError(SesameError):
    """A requested rate cannot be served by the interface or stream."""


class TruncationError(SesameError):
    """A stream is shorter than the requested span."""

    def __init__(self, message: str, missing: int = 0):
        super().__init__(message)
        self.missing = missing


class UnknownPredictorError(SesameError):
    """A predictor id is not present in the stream set."""


class InsufficientDataError(SesameError):
    """Not enough rows to fit a model (CLI exit code 2)."""


class DegenerateFitError(SesameError):
    """The regression problem is rank deficient or numerically degenerate."""


class SchemaError(SesameError):
    """Predictor ids or ordering do not match the model being applied."""


class ParseError(SesameError):
    """A persisted document could not be decoded."""

"""Exception hierarchy shared across the package."""


class VideoGroundError(Exception):
    """Base class for all errors raised by this package."""


class InvalidBoxError(VideoGroundError):
    """A bounding box violates its invariants (non-positive size, out of frame)."""


class InvalidIntervalError(VideoGroundError):
    """A temporal interval violates its invariants."""


class NoValidIntervalError(VideoGroundError):
    """No (start, end) pair satisfies the interval constraints (e.g. T=1 in strict mode)."""


class ConfigurationError(VideoGroundError):
    """A configuration value is inconsistent with the data or another setting."""


class TokenizerError(VideoGroundError):
    """A token or token id is outside the tokenizer vocabulary."""


class DataError(VideoGroundError):
    """An annotation file is missing, malformed, or violates the schema."""


class NumericalError(VideoGroundError):
    """Training hit a non-finite loss; carries the offending batch id."""

    def __init__(self, message: str, batch_id: int | None = None):
        super().__init__(message)
        self.batch_id = batch_id

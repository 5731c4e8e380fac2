"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


class CorpusFormatError(InvalidInputError):
    """Raised when a caption file cannot be parsed."""


class CheckpointError(RuntimeError):
    """Raised when an encoder checkpoint cannot be read or verified."""

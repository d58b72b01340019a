"""Exception hierarchy shared by all modules."""


class MModeError(Exception):
    """Base class for package errors."""


class FormatError(MModeError):
    """A binary file (video or checkpoint) is malformed or truncated."""


class ShapeError(MModeError, ValueError):
    """Array shapes are incompatible with an operation."""


class ArgumentError(MModeError, ValueError):
    """An argument is outside its documented domain."""


class ManifestError(MModeError):
    """A manifest CSV violates a record invariant."""


class DataError(MModeError):
    """A split needed for an operation is empty or unusable."""


class CheckpointError(MModeError):
    """A checkpoint is incompatible with the requested model."""


class IoError(MModeError, OSError):
    """An output location cannot be written."""

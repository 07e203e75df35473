"""Exception hierarchy shared by every tapemend module.

All operational failures derive from :class:`TapemendError` so callers
(CLI, service) can map them to exit codes / HTTP statuses uniformly.
"""


class TapemendError(Exception):
    """Base class for all tapemend failures."""


class NotFound(TapemendError):
    """A path, clip, job, or stored object does not exist."""


class EmptyClip(TapemendError):
    """A clip source yielded zero decodable frames."""


class ShapeMismatch(TapemendError):
    """Frames within one clip disagree on dimensions or form."""


class IoError(TapemendError):
    """Reading or writing frame/checkpoint data failed."""


class CropTooLarge(TapemendError):
    """Requested crop exceeds the frame dimensions."""


class InvalidParam(TapemendError):
    """An operation parameter is outside its documented domain."""


class InsufficientData(TapemendError):
    """Not enough source material to build the requested corpus."""


class ShapeError(TapemendError):
    """Tensor shape violates a model or loss precondition."""


class NumericalError(TapemendError):
    """Non-finite values were produced where finite ones are required."""


class IncompatibleCheckpoint(TapemendError):
    """Checkpoint config hash does not match the stored config."""


class SampleError(TapemendError):
    """A clip is too small for the requested patch window."""


class ExtractorUnavailable(TapemendError):
    """Requested feature-extractor weights cannot be loaded."""


class NoData(TapemendError):
    """An evaluation split or job input is empty."""


class FrameTooSmall(TapemendError):
    """Frame is smaller than one model patch even after padding."""

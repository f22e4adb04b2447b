"""Exception types shared across the toolkit."""


class MatkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(MatkitError):
    """Operands have incompatible shapes."""


class NumericError(MatkitError):
    """An operation produced NaN or infinity."""


class MissingMap(MatkitError):
    """A material directory lacks one of the four map files."""


class ResolutionMismatch(MatkitError):
    """The four maps of a material do not share one resolution."""


class InvalidNormal(MatkitError):
    """A decoded normal has non-positive z or degenerate length."""


class IoError(MatkitError):
    """Filesystem read/write failure."""


class PadTooLarge(MatkitError):
    """Requested circular padding exceeds the image extent."""


class CropError(MatkitError):
    """Crop window falls outside the source maps."""


class ParamError(MatkitError):
    """Invalid procedural generator parameters."""


class PromptError(MatkitError):
    """Prompt string does not match the expected format."""


class UnknownCategory(MatkitError):
    """Prompt category is not in the dataset vocabulary."""


class ScheduleError(MatkitError):
    """Invalid noise schedule parameters."""


class DataError(MatkitError):
    """Empty or unusable dataset."""


class NotTrained(MatkitError):
    """A network head is used before being trained/loaded."""

"""Exception and warning types shared across the toolkit."""


class SmallGeoError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SmallGeoError):
    """A value violates one of its declared invariants."""


class CorruptFileError(SmallGeoError):
    """A file on disk does not match what its header or format promises."""


class UnsupportedFormatError(SmallGeoError):
    """A file uses a dtype or layout this toolkit does not handle."""


class SchemaMismatchError(SmallGeoError):
    """Class ids present in the data are missing from the class schema."""


class OutOfBoundsError(SmallGeoError):
    """A requested window or index falls outside the raster extent."""


class EmptyClassError(SmallGeoError):
    """A labeled class has no usable (nodata-free) pixels."""


class UnsplittableClassError(SmallGeoError):
    """A class has too few polygons to be split into train and test."""


class DegenerateModelError(SmallGeoError):
    """Training data contains fewer than two classes."""


class InvalidInputError(SmallGeoError):
    """A prediction input contains NaN or has the wrong arity."""


class DimensionError(SmallGeoError):
    """Array shapes or band counts do not line up."""


class EmptyInputError(SmallGeoError):
    """An operation received an empty raster."""


class NoSupervisionError(SmallGeoError):
    """A loss computation found zero valid labeled pixels."""


class ProtocolError(SmallGeoError):
    """An operation was called out of order (e.g. backward without forward)."""


class TrainingDivergedError(SmallGeoError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class LayoutError(SmallGeoError):
    """Synthetic scene regions do not fit inside the scene."""


class ConfigError(SmallGeoError):
    """A pipeline configuration is incomplete or inconsistent."""


class StageError(SmallGeoError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class NonConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap before reaching tolerance."""

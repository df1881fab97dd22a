"""Exception hierarchy.

Every failure mode the library reports has its own class so callers (and the
CLI exit-code mapping) can distinguish error families without string matching.
"""


class SairError(Exception):
    """Base class for all library errors."""


class NiftiError(SairError):
    """Base class for NIfTI I/O failures."""


class BadMagicError(NiftiError):
    """File does not carry the single-file NIfTI-1 magic ``n+1\\0``."""


class UnsupportedFormatError(NiftiError):
    """Header is valid NIfTI-1 but uses a datatype/dimensionality outside the
    supported subset (float32 or int16, exactly 3 spatial dims)."""


class TruncatedFileError(NiftiError):
    """File ends before the declared voxel payload."""


class ConstantVolumeError(SairError):
    """Intensity normalization needs at least two distinct values."""


class EmptyMaskError(SairError):
    """Metric evaluation needs at least one selected voxel."""


class NumericalDivergenceError(SairError):
    """Base class for non-finite numerical failures."""


class TrainingDivergedError(NumericalDivergenceError):
    """Loss became non-finite during optimization."""


class NonFiniteOutputError(NumericalDivergenceError):
    """The network produced non-finite values at prediction time."""

"""3D volume container, masks, and intensity normalization.

Conventions used throughout the library:

* ``Volume.data`` is a dense float64 array indexed ``[x, y, z]`` (C order),
  where z is the thick-slice (axial) direction.
* ``spacing`` is the voxel size ``(dx, dy, dz)`` in mm, all strictly positive.
  The anisotropy ratio is ``dz / dx``.
* Volumes are treated as immutable values; every operation returns a new
  Volume and never mutates its input, so they are safe to share across
  threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantVolumeError

__all__ = ["Volume", "Mask", "IntensityScale", "normalize_intensities"]


@dataclass(frozen=True)
class Volume:
    """A 3D scalar field with voxel spacing.

    Parameters
    ----------
    data : ndarray, shape (nx, ny, nz)
        Voxel intensities, finite.
    spacing : tuple of float
        Voxel size (dx, dy, dz) in mm, each > 0.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"volume dims must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains non-finite values")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive floats, got {self.spacing}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def resolution_ratio(self) -> float:
        """Through-plane over in-plane voxel size, dz / dx."""
        return self.spacing[2] / self.spacing[0]

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.spacing)

    def allclose(self, other: "Volume", atol: float = 0.0, rtol: float = 0.0) -> bool:
        return self.dims == other.dims and np.allclose(
            self.data, other.data, atol=atol, rtol=rtol
        )


@dataclass(frozen=True)
class Mask:
    """Boolean voxel selection matching a companion Volume's dims."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 3:
            raise ValueError(f"mask data must be 3D, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True)
class IntensityScale:
    """Affine intensity map recorded by :func:`normalize_intensities`.

    ``normalized = (raw - lo) / (hi - lo)`` clamped to [0, 1];
    :meth:`invert` undoes the affine part (clamping is lossy by design).
    """

    lo: float
    hi: float

    def apply(self, data: np.ndarray) -> np.ndarray:
        out = (np.asarray(data, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        return np.clip(out, 0.0, 1.0)

    def invert(self, data: np.ndarray) -> np.ndarray:
        return np.asarray(data, dtype=np.float64) * (self.hi - self.lo) + self.lo


def normalize_intensities(v: Volume) -> tuple[Volume, IntensityScale]:
    """Map intensities to unit range using robust percentiles.

    The 0.5th percentile goes to 0 and the 99.5th to 1, then values are
    clamped to [0, 1]. Percentile anchors (rather than min/max) make the map
    robust to hot pixels.

    Returns
    -------
    (Volume, IntensityScale)
        Normalized volume and the affine record needed to undo the map.

    Raises
    ------
    ConstantVolumeError
        If the percentile anchors coincide (fewer than two distinct values
        or pathologically concentrated data).
    """
    lo, hi = np.percentile(v.data, [0.5, 99.5])
    if hi <= lo:
        raise ConstantVolumeError(
            f"cannot normalize: percentile anchors coincide (lo={lo}, hi={hi})"
        )
    scale = IntensityScale(float(lo), float(hi))
    return v.with_data(scale.apply(v.data)), scale

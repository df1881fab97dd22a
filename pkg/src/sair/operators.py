"""Linear and stochastic operators of the acquisition model.

The low-resolution volume is modeled as ``decimate_z(blur_z(X)) + noise``:
a through-plane blur with the slice-selection profile, decimation by the
anisotropy factor r, and additive white Gaussian noise. The same operators,
applied along x on an axis-permuted profile, synthesize self-supervised
training data; in-plane rotation about z supplies the augmentation /
ensemble geometry.

All operators are pure (inputs never mutated) and deterministic; the noise
operator draws from a counter-based Philox stream keyed on the seed so the
sample field depends only on (seed, dims).

Conventions: axis 0/1/2 = x/y/z; blur uses mirror boundary (edge sample not
repeated, i.e. ``np.pad(mode="reflect")``); cubic interpolation is
Catmull-Rom (a = -0.5) with clamped edges; decimation keeps indices
0, r, 2r, ... and upsampling maps coarse sample i exactly to fine index i*r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume import Volume

__all__ = [
    "SliceProfile",
    "ForwardModelConfig",
    "gaussian_profile",
    "delta_profile",
    "blur_axis",
    "downsample_axis",
    "upsample_axis_bicubic",
    "rotate_z",
    "rotation_valid_mask",
    "add_gaussian_noise",
    "apply_forward_model",
]

AXES = {"x": 0, "y": 1, "z": 2}


def _axis_index(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ValueError(f"axis must be one of {tuple(AXES)}, got {axis!r}") from None
    axis = int(axis)
    if axis not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {axis}")
    return axis


@dataclass(frozen=True)
class SliceProfile:
    """Normalized 1D kernel modeling the scanner's through-plane response.

    Invariants: odd support, symmetric about the center, taps sum to 1
    within 1e-12 (DC gain preserved).
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size % 2 != 1:
            raise ValueError(f"profile taps must be a 1D odd-length array, got shape {taps.shape}")
        if abs(taps.sum() - 1.0) > 1e-12:
            raise ValueError(f"profile taps must sum to 1, got {taps.sum()!r}")
        if not np.allclose(taps, taps[::-1], atol=1e-12, rtol=0.0):
            raise ValueError("profile taps must be symmetric about the center")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def radius(self) -> int:
        return self.taps.size // 2


@dataclass(frozen=True)
class ForwardModelConfig:
    """Parameters of the degradation: decimation factor, profile, noise."""

    r: int
    profile: SliceProfile
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"decimation factor must be >= 1, got {self.r}")
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")


def gaussian_profile(slice_thickness_ratio: float) -> SliceProfile:
    """Discrete Gaussian slice profile with FWHM = ratio samples.

    sigma = ratio / (2*sqrt(2*ln 2)), truncated at +/- ceil(3*sigma) and
    renormalized to unit sum.
    """
    r = float(slice_thickness_ratio)
    if r < 1:
        raise ValueError(f"slice thickness ratio must be >= 1, got {r}")
    sigma = r / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    radius = math.ceil(3.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(k**2) / (2.0 * sigma**2))
    return SliceProfile(taps / taps.sum())


def delta_profile() -> SliceProfile:
    """Identity profile (single unit tap); degenerate blur."""
    return SliceProfile(np.array([1.0]))


def blur_axis(v: Volume, k: SliceProfile, axis) -> Volume:
    """1D convolution along one axis with mirror boundary; dims unchanged."""
    ax = _axis_index(axis)
    n = v.dims[ax]
    if k.taps.size >= 2 * n:
        raise ValueError(f"kernel of {k.taps.size} taps too long for axis of {n} samples")
    out = ndimage.convolve1d(v.data, k.taps, axis=ax, mode="mirror", output=np.float64)
    return v.with_data(out)


def downsample_axis(v: Volume, r: int, axis) -> Volume:
    """Pure decimation keeping indices 0, r, 2r, ...; output dim floor(n/r).

    No blur is applied here; the acquisition model composes
    ``downsample_axis(blur_axis(...))`` in :func:`apply_forward_model`.
    Spacing along the axis is multiplied by r.
    """
    ax = _axis_index(axis)
    r = int(r)
    n = v.dims[ax]
    if r < 1:
        raise ValueError(f"decimation factor must be >= 1, got {r}")
    if r > n:
        raise ValueError(f"decimation factor {r} exceeds axis length {n}")
    keep = np.arange(0, (n // r) * r, r)
    out = np.take(v.data, keep, axis=ax)
    spacing = list(v.spacing)
    spacing[ax] *= r
    return Volume(out, tuple(spacing))


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Keys cubic-convolution weights (a = -0.5) for taps at offsets -1..2.

    ``t`` is the fractional position in [0, 1); returns shape t.shape + (4,).
    """
    t = np.asarray(t, dtype=np.float64)
    w = np.empty(t.shape + (4,), dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    w[..., 0] = -0.5 * t3 + t2 - 0.5 * t
    w[..., 1] = 1.5 * t3 - 2.5 * t2 + 1.0
    w[..., 2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w[..., 3] = 0.5 * t3 - 0.5 * t2
    return w


def upsample_axis_bicubic(v: Volume, r: int, axis) -> Volume:
    """Catmull-Rom cubic upsampling by integer factor r along one axis.

    Coarse sample i maps exactly to fine index i*r (on-grid values are
    preserved bit-for-bit); edges are handled by clamping the 4-tap stencil.
    Output dim is n*r and spacing along the axis is divided by r.
    """
    ax = _axis_index(axis)
    r = int(r)
    n = v.dims[ax]
    if r < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {r}")
    if n < 4:
        raise ValueError(f"axis of {n} samples too short for cubic interpolation (need >= 4)")

    j = np.arange(n * r)
    i0, t = np.divmod(j, r)
    t = t / r
    w = _catmull_rom_weights(t)  # (n*r, 4)
    idx = np.clip(i0[:, None] + np.arange(-1, 3)[None, :], 0, n - 1)  # (n*r, 4)

    # at t = 0 the weights are exactly (0, 1, 0, 0), so on-grid samples pass
    # through bit-for-bit
    d = np.moveaxis(v.data, ax, -1)
    out = np.zeros(d.shape[:-1] + (n * r,), dtype=np.float64)
    for k in range(4):
        out += d[..., idx[:, k]] * w[:, k]
    out = np.moveaxis(out, -1, ax)
    spacing = list(v.spacing)
    spacing[ax] /= r
    return Volume(out, tuple(spacing))


def _rotation_stencil(nx: int, ny: int, theta_deg: float):
    """Source indices/weights for an in-plane rotation about the grid center.

    Returns (idx, w, valid): idx (nx*ny, 4, 4) flat indices into an (nx, ny)
    plane, w the matching Catmull-Rom weights, valid the in-bounds mask.
    """
    th = math.radians(theta_deg)
    c, s = math.cos(th), math.sin(th)
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    x, y = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    dx, dy = x - cx, y - cy
    # inverse rotation: sample the source at R(-theta) applied to the output grid
    u = c * dx + s * dy + cx
    v = -s * dx + c * dy + cy
    valid = (u >= 0) & (u <= nx - 1) & (v >= 0) & (v <= ny - 1)

    iu = np.floor(u).astype(np.int64)
    iv = np.floor(v).astype(np.int64)
    wu = _catmull_rom_weights(u - iu)  # (nx, ny, 4)
    wv = _catmull_rom_weights(v - iv)
    offs = np.arange(-1, 3)
    ju = np.clip(iu[..., None] + offs, 0, nx - 1)  # (nx, ny, 4)
    jv = np.clip(iv[..., None] + offs, 0, ny - 1)
    idx = (ju[..., :, None] * ny + jv[..., None, :]).reshape(-1, 4, 4)
    w = (wu[..., :, None] * wv[..., None, :]).reshape(-1, 4, 4)
    return idx, w, valid.reshape(-1)


def rotation_valid_mask(nx: int, ny: int, theta_deg: float) -> np.ndarray:
    """(nx, ny) bool plane: pixels whose rotated source lies inside the grid."""
    _, _, valid = _rotation_stencil(nx, ny, theta_deg)
    return valid.reshape(nx, ny)


def rotate_z(v: Volume, theta_deg: float) -> Volume:
    """In-plane rotation by theta (degrees, CCW) about the (x, y) center.

    Catmull-Rom resampling, zero fill outside the source grid, dims
    unchanged; theta = 0 is an exact identity. Applies the same 2D stencil
    to every z slice.
    """
    nx, ny, nz = v.dims
    if nx != ny:
        raise ValueError(f"rotation needs square in-plane dims, got {nx}x{ny}")
    if theta_deg % 360.0 == 0.0:
        return v
    idx, w, valid = _rotation_stencil(nx, ny, theta_deg)
    planes = v.data.reshape(nx * ny, nz)
    out = np.zeros_like(planes)
    for a in range(4):
        for b in range(4):
            out += planes[idx[:, a, b]] * w[:, a, b][:, None]
    out[~valid] = 0.0
    return v.with_data(out.reshape(nx, ny, nz))


def add_gaussian_noise(v: Volume, sigma: float, seed: int) -> Volume:
    """Add i.i.d. N(0, sigma^2) noise from a Philox stream keyed on seed.

    The field is a deterministic function of (seed, dims); sigma = 0 returns
    the input unchanged.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return v
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    noise = rng.standard_normal(v.dims) * sigma
    return v.with_data(v.data + noise)


def apply_forward_model(x: Volume, cfg: ForwardModelConfig, axis) -> Volume:
    """Degrade a volume along one axis: blur, decimate by r, add noise."""
    blurred = blur_axis(x, cfg.profile, axis)
    coarse = downsample_axis(blurred, cfg.r, axis)
    return add_gaussian_noise(coarse, cfg.sigma, cfg.seed)

"""Deterministic synthetic ground-truth volumes for quantitative evaluation.

The phantom is a nested family of smooth ellipsoids with distinct intensity
plateaus, carved by a few thin curved dark ridges and (optionally) overlaid
with band-limited texture. Ridges and texture put energy well above the
coarse-grid Nyquist along every axis, so through-plane restoration is a
non-trivial task. The evaluation mask is the outermost ellipsoid.

Everything is a pure function of the spec (seeded Philox draws in fixed
order), so two calls with the same spec produce identical volumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Mask, Volume

__all__ = ["PhantomSpec", "generate_phantom"]

MIN_DIM = 32


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the synthetic volume.

    dims is cubic (n, n, n) with n >= 32 (>= 64 for sweep experiments);
    texture_amplitude in [0, 0.2] scales the unit-variance band-limited
    texture field.
    """

    dims: tuple[int, int, int] = (96, 96, 96)
    seed: int = 0
    n_ellipsoids: int = 5
    texture_amplitude: float = 0.1

    def __post_init__(self):
        n = self.dims[0]
        if len(self.dims) != 3 or any(d != n for d in self.dims):
            raise ValueError(f"phantom dims must be cubic, got {self.dims}")
        if n < MIN_DIM:
            raise ValueError(f"phantom dims too small: {n} < {MIN_DIM}")
        if self.n_ellipsoids < 3:
            raise ValueError(f"need at least 3 ellipsoids, got {self.n_ellipsoids}")
        if not 0.0 <= self.texture_amplitude <= 0.2:
            raise ValueError(f"texture_amplitude must be in [0, 0.2], got {self.texture_amplitude}")


def _random_rotation(rng) -> np.ndarray:
    """Uniform random 3D rotation matrix (QR of a Gaussian matrix)."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _smooth_inside(level: np.ndarray, width: float) -> np.ndarray:
    """1 deep inside (level << 0), 0 far outside, smoothstep across |level|<width.

    Exactly saturates outside the transition band, so plateaus are flat to
    machine precision.
    """
    t = np.clip((width - level) / (2.0 * width), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _band_limited_texture(n: int, rng) -> np.ndarray:
    """Unit-std random field with radial spectrum confined to [n/8, n/3].

    The band sits above the coarse-grid Nyquist for every anisotropy ratio
    of interest, so the texture is genuine through-plane detail.
    """
    white = rng.standard_normal((n, n, n))
    spec = np.fft.rfftn(white)
    fx = np.fft.fftfreq(n) * n
    fz = np.fft.rfftfreq(n) * n
    kk = np.sqrt(fx[:, None, None] ** 2 + fx[None, :, None] ** 2 + fz[None, None, :] ** 2)
    band = (kk >= n / 8.0) & (kk <= n / 3.0)
    tex = np.fft.irfftn(spec * band, s=(n, n, n), axes=(0, 1, 2))
    return tex / tex.std()


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, Mask]:
    """Build the phantom volume (intensities in [0, 1]) and its mask."""
    n = spec.dims[0]
    rng = np.random.Generator(np.random.Philox(key=int(spec.seed) & (2**64 - 1)))

    # normalized coordinates in [-1, 1]
    g = (np.arange(n) - (n - 1) / 2.0) / ((n - 1) / 2.0)
    gx, gy, gz = np.meshgrid(g, g, g, indexing="ij")
    pts = np.stack([gx, gy, gz])  # (3, n, n, n)
    voxel = 2.0 / (n - 1)

    outer_axes = rng.uniform(0.80, 0.90, size=3)
    level_outer = sum((pts[i] / outer_axes[i]) ** 2 for i in range(3)) - 1.0
    mask = level_outer <= 0.0
    # shape window: exactly 1 deep inside, rolls off to exactly 0 at the
    # mask boundary, so the background stays black
    width_outer = 1.5 * voxel * 2.0 / outer_axes.min()
    shape = _smooth_inside(level_outer + width_outer, width_outer)

    plateaus = rng.permutation(np.linspace(0.25, 0.95, spec.n_ellipsoids - 1))
    plateaus = plateaus + rng.uniform(-0.02, 0.02, size=plateaus.size)

    vol = np.full((n, n, n), rng.uniform(0.35, 0.50))
    shrink = np.linspace(0.75, 0.18, spec.n_ellipsoids - 1)
    for k in range(spec.n_ellipsoids - 1):
        axes = outer_axes * shrink[k] * rng.uniform(0.8, 1.1, size=3)
        center = rng.uniform(-1.0, 1.0, size=3)
        center *= (1.0 - shrink[k]) * 0.7 * outer_axes
        rot = _random_rotation(rng)
        local = np.tensordot(rot, pts - center[:, None, None, None], axes=(1, 0))
        level = sum((local[i] / axes[i]) ** 2 for i in range(3)) - 1.0
        win = _smooth_inside(level, 1.5 * voxel * 2.0 / axes.min())
        vol = vol * (1.0 - win) + plateaus[k] * win

    # thin curved dark sheets: |grad s| ~ 1, so width is in voxel units
    for _ in range(3):
        normal = rng.standard_normal(3)
        normal /= np.linalg.norm(normal)
        curve = rng.standard_normal((3, 3)) * 0.35
        offset = rng.uniform(-0.4, 0.4)
        s = np.tensordot(normal, pts, axes=(0, 0)) + offset
        s += np.einsum("iabc,ij,jabc->abc", pts, curve, pts)
        ridge = np.exp(-((s / (1.2 * voxel)) ** 2))
        depth = rng.uniform(0.35, 0.6)
        vol *= 1.0 - depth * ridge

    if spec.texture_amplitude > 0:
        vol = vol + spec.texture_amplitude * _band_limited_texture(n, rng)

    vol = np.clip(vol, 0.0, 1.0) * shape
    return Volume(vol), Mask(mask)

"""Self-supervised training-pair synthesis.

The upsampled volume is rotated about z by evenly spaced angles; each
rotated copy is degraded along x with the axis-permuted acquisition model
(blur, decimate by r, noise) and re-upsampled along x, so the network only
has to refine the chosen upsampling operator. Axial (x, y) slices of the
degraded/clean volumes form the (input, target) pairs: the first image axis
is always the degraded one, matching the (z, x) orientation used at
prediction time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .nifti import write_nifti
from .operators import (
    ForwardModelConfig,
    SliceProfile,
    apply_forward_model,
    gaussian_profile,
    rotation_valid_mask,
    upsample_axis_bicubic,
)
from .operators import rotate_z
from .volume import Volume

__all__ = [
    "TrainingPair",
    "TrainConfig",
    "training_angles",
    "upsample_lowres",
    "ratio_from_spacing",
    "build_training_set",
    "dump_training_set",
]

COVERAGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainingPair:
    """Co-registered (degraded, clean) 2D slices, float32.

    ``input``/``target`` have equal shape; axis 0 is the degraded axis.
    Provenance: rotation angle theta (degrees) and z slice index.
    """

    input: np.ndarray
    target: np.ndarray
    theta: float
    slice_index: int

    def __post_init__(self):
        if self.input.shape != self.target.shape:
            raise ValueError(
                f"pair shapes differ: {self.input.shape} vs {self.target.shape}"
            )
        if not (np.all(np.isfinite(self.input)) and np.all(np.isfinite(self.target))):
            raise ValueError("training pair contains non-finite values")


@dataclass(frozen=True)
class TrainConfig:
    """Training-set synthesis parameters.

    ``sigma`` is the noise level of the synthetic degradation (unit-range
    intensity scale); ``n_train`` rotations are used.
    """

    r: int
    profile: SliceProfile
    sigma: float = 0.0
    seed: int = 0
    n_train: int = 10

    def __post_init__(self):
        if self.n_train < 1:
            raise ValueError(f"n_train must be >= 1, got {self.n_train}")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @staticmethod
    def for_ratio(r: int, sigma: float = 0.0, seed: int = 0, n_train: int = 10) -> "TrainConfig":
        return TrainConfig(r=r, profile=gaussian_profile(r), sigma=sigma, seed=seed, n_train=n_train)


def training_angles(n_train: int) -> list[float]:
    """Evenly spaced angles on [0, 180): theta_i = i * 180 / n.

    180 itself is excluded (it duplicates 0 up to a flip).
    """
    if n_train < 1:
        raise ValueError(f"n_train must be >= 1, got {n_train}")
    return [i * 180.0 / n_train for i in range(n_train)]


def upsample_lowres(x_lr: Volume, r: int) -> Volume:
    """Bicubic upsampling along z back to the isotropic grid."""
    return upsample_axis_bicubic(x_lr, r, "z")


def ratio_from_spacing(v: Volume) -> int:
    """Integer anisotropy factor from spacing, r = round(dz / dx).

    Raises if the spacing ratio is farther than 10% from the rounded
    integer (the acquisition model only covers integer decimation).
    """
    ratio = v.resolution_ratio
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 0.1 * r:
        raise ValueError(f"spacing ratio {ratio:.3f} is not near an integer factor")
    return r


def _derived_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def build_training_set(x_up: Volume, cfg: TrainConfig) -> list[TrainingPair]:
    """Synthesize (degraded, clean) axial slice pairs from rotated copies.

    For each angle: rotate, degrade along x with a per-angle derived noise
    seed, re-upsample along x, slice. When r does not divide nx the inputs
    only cover x < r * floor(nx / r); targets are cropped to match (the
    decimation grid is anchored at index 0). Slices whose rotation-valid
    coverage is below 50% are excluded so zero-filled corners are never
    presented as ground truth.
    """
    nx, ny, nz = x_up.dims
    pairs: list[TrainingPair] = []
    for k, theta in enumerate(training_angles(cfg.n_train)):
        v_rot = rotate_z(x_up, theta)
        # in-plane rotation: every z slice shares the same validity plane
        coverage = float(rotation_valid_mask(nx, ny, theta).mean())
        if coverage < COVERAGE_THRESHOLD:
            continue
        fm = ForwardModelConfig(cfg.r, cfg.profile, cfg.sigma, _derived_seed(cfg.seed, k))
        degraded = apply_forward_model(v_rot, fm, axis="x")
        inp_vol = upsample_axis_bicubic(degraded, cfg.r, axis="x")
        nxe = inp_vol.dims[0]
        for z in range(nz):
            pairs.append(
                TrainingPair(
                    input=inp_vol.data[:, :, z].astype(np.float32),
                    target=v_rot.data[:nxe, :, z].astype(np.float32),
                    theta=theta,
                    slice_index=z,
                )
            )
    if not pairs:
        raise ValueError("training set is empty: every slice failed the coverage rule")
    return pairs


def dump_training_set(pairs, out_dir) -> None:
    """Debugging aid: write each pair as 2D NIfTI files, one dir per angle."""
    for pair in pairs:
        d = os.path.join(out_dir, f"angle_{pair.theta:07.2f}")
        os.makedirs(d, exist_ok=True)
        for tag, img in (("input", pair.input), ("target", pair.target)):
            vol = Volume(np.asarray(img, dtype=np.float64)[:, :, None])
            write_nifti(vol, os.path.join(d, f"{tag}_{pair.slice_index:04d}.nii"))

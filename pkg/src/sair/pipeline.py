"""End-to-end restoration: ensemble prediction and the full training run.

Prediction applies the trained network to rotated copies of the upsampled
volume and fuses the rotated-back results with Fourier-burst accumulation.
Slices presented to the network are fixed-y planes ordered (z, x), so the
blurry axis occupies the same tensor position as the degraded x axis did in
training. Intensities are normalized once from the low-resolution input and
the same affine transform is reused for training, prediction, and inverted
on the fused output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import TrainConfig, build_training_set, ratio_from_spacing, upsample_lowres
from .errors import NonFiniteOutputError
from .fba import EnsembleConfig, fba_fuse
from .operators import rotate_z
from .unet.network import forward_batch, pad_to_even
from .unet.params import UNetParams
from .unet.training import DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, TrainReport, train
from .volume import Volume, normalize_intensities

__all__ = ["ReconstructionJob", "predict_single_angle", "reconstruct", "run_sair"]

PREDICT_BATCH = 16


@dataclass(frozen=True)
class ReconstructionJob:
    """Everything needed to reconstruct one volume with a trained network."""

    x_lr: Volume
    r: int
    train_cfg: TrainConfig
    ens_cfg: EnsembleConfig
    net: UNetParams
    seed: int = 0

    def __post_init__(self):
        ratio = self.x_lr.resolution_ratio
        if self.r < 1 or abs(ratio - self.r) > 0.1 * self.r:
            raise ValueError(
                f"decimation factor {self.r} inconsistent with spacing ratio {ratio:.3f}"
            )


def _apply_net_slicewise(net: UNetParams, vol: Volume, kernel_cache: dict | None) -> Volume:
    """Run the network over all fixed-y planes, axes ordered (z, x)."""
    nx, ny, nz = vol.dims
    # (ny, 1, nz, nx): plane y, image row z (blurry axis first), column x
    stack = np.ascontiguousarray(vol.data.transpose(1, 2, 0)[:, None]).astype(np.float32)
    padded, _ = pad_to_even(stack)
    out = np.empty_like(padded)
    for start in range(0, ny, PREDICT_BATCH):
        chunk = padded[start : start + PREDICT_BATCH]
        res, _ = forward_batch(net, chunk, kernel_cache=kernel_cache)
        out[start : start + PREDICT_BATCH] = res
    out = out[:, 0, :nz, :nx]  # (ny, nz, nx)
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutputError("network produced non-finite values during prediction")
    return vol.with_data(out.transpose(2, 0, 1).astype(np.float64))


def predict_single_angle(
    net: UNetParams, x_up: Volume, theta: float, kernel_cache: dict | None = None
) -> Volume:
    """One ensemble member: rotate, restore slice-wise, rotate back."""
    rotated = rotate_z(x_up, theta)
    restored = _apply_net_slicewise(net, rotated, kernel_cache)
    return rotate_z(restored, -theta)


def _pad_square_xy(v: Volume) -> tuple[Volume, tuple[int, int]]:
    """Reflect-pad in-plane dims to a common even square (rotation needs nx == ny)."""
    nx, ny, nz = v.dims
    side = max(nx, ny)
    side += side % 2
    px, py = side - nx, side - ny
    if px == 0 and py == 0:
        return v, (0, 0)
    data = np.pad(v.data, ((0, px), (0, py), (0, 0)), mode="reflect")
    return Volume(data, v.spacing), (px, py)


def reconstruct(job: ReconstructionJob) -> Volume:
    """Fuse the rotation ensemble of network predictions for one volume.

    Normalizes intensities, upsamples along z, predicts at the n_pred
    evenly spaced angles (members in angle order), FBA-fuses, crops any
    square-padding, and maps intensities back to the input scale.
    """
    normalized, scale = normalize_intensities(job.x_lr)
    padded, _ = _pad_square_xy(normalized)
    x_up = upsample_lowres(padded, job.r)
    kernel_cache: dict = {}
    preds = [
        predict_single_angle(job.net, x_up, theta, kernel_cache)
        for theta in job.ens_cfg.angles
    ]
    fused = fba_fuse(preds, job.ens_cfg)
    nx, ny, _ = job.x_lr.dims
    out = fused.data[:nx, :ny, :]
    return Volume(scale.invert(out), fused.spacing)


def run_sair(
    x_lr: Volume,
    r: int | None = None,
    train_cfg: TrainConfig | None = None,
    ens_cfg: EnsembleConfig = EnsembleConfig(),
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> tuple[Volume, TrainReport]:
    """Self-supervised restoration of a single anisotropic volume.

    Upsamples, synthesizes rotation training pairs, trains the per-volume
    network, and reconstructs with the FBA ensemble. Deterministic per
    (x_lr, configs, seed).
    """
    if r is None:
        r = ratio_from_spacing(x_lr)
    if train_cfg is None:
        train_cfg = TrainConfig.for_ratio(r, seed=seed)

    normalized, _ = normalize_intensities(x_lr)
    padded, _ = _pad_square_xy(normalized)
    x_up = upsample_lowres(padded, r)
    pairs = build_training_set(x_up, train_cfg)
    net, report = train(pairs, epochs=epochs, batch_size=batch_size, seed=seed)

    job = ReconstructionJob(x_lr, r, train_cfg, ens_cfg, net, seed)
    return reconstruct(job), report

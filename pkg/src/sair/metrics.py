"""Masked evaluation metrics: MSE in decibels and mean SSIM.

Both metrics assume intensities on the unit-normalized scale. SSIM is
computed slice-wise in 2D (axial planes) with the standard 11x11 Gaussian
window (sigma 1.5) and constants C1 = 0.01^2, C2 = 0.03^2 for dynamic range
L = 1, mirror boundary handling; the reported value is the mean of the SSIM
map over masked voxels across all slices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError
from .volume import Mask, Volume

__all__ = ["EvalResult", "mse_db", "ssim_masked", "evaluate"]

MSE_DB_FLOOR = -300.0
SSIM_WINDOW_RADIUS = 5
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class EvalResult:
    mse_db: float
    ssim: float
    voxels_evaluated: int

    def __post_init__(self):
        if not -1.0 - 1e-9 <= self.ssim <= 1.0 + 1e-9:
            raise ValueError(f"ssim out of range: {self.ssim}")
        if self.voxels_evaluated <= 0:
            raise ValueError("no voxels evaluated")


def _check_inputs(a: Volume, b: Volume, m: Mask) -> np.ndarray:
    if a.dims != b.dims or a.dims != m.dims:
        raise ValueError(f"dims mismatch: {a.dims}, {b.dims}, mask {m.dims}")
    if m.count == 0:
        raise EmptyMaskError("metric mask selects no voxels")
    return m.data


def mse_db(a: Volume, b: Volume, m: Mask) -> float:
    """Masked mean squared error in decibels, floored at -300 dB.

    The floor keeps identical-input comparisons finite and sweep outputs
    total-ordered.
    """
    sel = _check_inputs(a, b, m)
    diff = a.data[sel] - b.data[sel]
    mse = float(np.mean(diff * diff))
    if mse <= 0.0:
        return MSE_DB_FLOOR
    return max(10.0 * np.log10(mse), MSE_DB_FLOOR)


def _gauss_window() -> np.ndarray:
    k = np.arange(-SSIM_WINDOW_RADIUS, SSIM_WINDOW_RADIUS + 1, dtype=np.float64)
    w = np.exp(-(k**2) / (2.0 * SSIM_SIGMA**2))
    return w / w.sum()


def _filt2(vol: np.ndarray, w1: np.ndarray) -> np.ndarray:
    # separable window over the in-plane axes: filters every z slice at once
    out = ndimage.convolve1d(vol, w1, axis=0, mode="mirror", output=np.float64)
    return ndimage.convolve1d(out, w1, axis=1, mode="mirror", output=np.float64)


def ssim_map(a: np.ndarray, b: np.ndarray, c1: float = SSIM_C1, c2: float = SSIM_C2) -> np.ndarray:
    """Per-voxel SSIM of two volumes (or 2D images), slice-wise windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    squeeze = a.ndim == 2
    if squeeze:
        a, b = a[..., None], b[..., None]
    w1 = _gauss_window()
    mu1, mu2 = _filt2(a, w1), _filt2(b, w1)
    s11 = _filt2(a * a, w1) - mu1 * mu1
    s22 = _filt2(b * b, w1) - mu2 * mu2
    s12 = _filt2(a * b, w1) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    out = num / den
    return out[..., 0] if squeeze else out


def ssim_masked(a: Volume, b: Volume, m: Mask) -> float:
    """Mean SSIM over masked voxels across all axial slices."""
    sel = _check_inputs(a, b, m)
    return float(np.mean(ssim_map(a.data, b.data)[sel]))


def evaluate(recon: Volume, reference: Volume, m: Mask) -> EvalResult:
    """Bundle both metrics against a reference volume."""
    return EvalResult(
        mse_db=mse_db(recon, reference, m),
        ssim=ssim_masked(recon, reference, m),
        voxels_evaluated=m.count,
    )

"""Fourier-burst accumulation of the rotation-ensemble predictions.

Each prediction contributes to the fused spectrum in proportion to its
relative spectral energy: ``W_m = |F_m|^2 / sum_k |F_k|^2`` per frequency
(the p = 2 weighting), and the fusion is the inverse FFT of
``sum_m W_m * F_m``. Frequencies where every member is (numerically) empty
fall back to uniform weights so the weight field always sums to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dataset import training_angles
from .volume import Volume

__all__ = ["EnsembleConfig", "fft3", "ifft3", "fba_weights", "fba_fuse"]

DENOM_FLOOR = 1e-30


@dataclass(frozen=True)
class EnsembleConfig:
    """Prediction-ensemble parameters.

    ``n_pred`` rotations at the same even spacing rule as training;
    the spectral-magnitude exponent is fixed at 2. ``weight_smoothing``
    (voxels, Gaussian sigma) optionally smooths the |F|^2 fields before
    weighting; 0 disables it and implements the weight formula exactly.
    """

    n_pred: int = 15
    p_exponent: int = 2
    weight_smoothing: float = 0.0

    def __post_init__(self):
        if self.n_pred < 1:
            raise ValueError(f"n_pred must be >= 1, got {self.n_pred}")
        if self.p_exponent != 2:
            raise ValueError(f"only p = 2 is supported, got {self.p_exponent}")
        if self.weight_smoothing < 0:
            raise ValueError(f"weight_smoothing must be >= 0, got {self.weight_smoothing}")

    @property
    def angles(self) -> list[float]:
        return training_angles(self.n_pred)


def fft3(v: Volume) -> np.ndarray:
    """3D DFT of the volume (numpy convention: unscaled forward)."""
    return np.fft.fftn(v.data)


def ifft3(spectrum: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Inverse 3D DFT; the (small) imaginary residue is discarded."""
    return Volume(np.fft.ifftn(spectrum).real, spacing)


def _magnitudes_sq(spectra: list[np.ndarray], smoothing: float) -> np.ndarray:
    mags = np.stack([np.abs(s) ** 2 for s in spectra])
    if smoothing > 0:
        # frequency axes are periodic, hence wrap-around smoothing
        mags = np.stack(
            [ndimage.gaussian_filter(m, sigma=smoothing, mode="wrap") for m in mags]
        )
    return mags


def fba_weights(spectra: list[np.ndarray], smoothing: float = 0.0) -> np.ndarray:
    """Per-frequency weights, shape (n_members,) + spectrum shape.

    Weights sum to 1 at every frequency; where the total energy is below
    1e-30 the weights are uniform.
    """
    if len(spectra) == 0:
        raise ValueError("need at least one spectrum")
    dims = spectra[0].shape
    if any(s.shape != dims for s in spectra):
        raise ValueError("spectra have mismatched dims")
    mags = _magnitudes_sq(spectra, smoothing)
    denom = mags.sum(axis=0)
    empty = denom < DENOM_FLOOR
    weights = np.where(empty, 1.0 / len(spectra), mags / np.where(empty, 1.0, denom))
    return weights


def fba_fuse(preds: list[Volume], cfg: EnsembleConfig | None = None) -> Volume:
    """Fuse predictions by spectral-energy weighting (members in list order).

    Asserts the fused spectrum stays (numerically) Hermitian: the imaginary
    residue after the inverse FFT must be below 1e-8 of the data range.
    """
    if len(preds) == 0:
        raise ValueError("need at least one prediction")
    dims = preds[0].dims
    if any(p.dims != dims for p in preds):
        raise ValueError(f"prediction dims mismatch: {[p.dims for p in preds]}")
    smoothing = cfg.weight_smoothing if cfg is not None else 0.0
    spectra = [fft3(p) for p in preds]
    weights = fba_weights(spectra, smoothing)
    fused = np.zeros(dims, dtype=np.complex128)
    for w, s in zip(weights, spectra):
        fused += w * s
    out = np.fft.ifftn(fused)
    data_range = max(max(float(np.ptp(p.data)) for p in preds), 1e-12)
    resid = float(np.max(np.abs(out.imag)))
    if resid > 1e-8 * data_range:
        raise FloatingPointError(
            f"imaginary residue {resid:.3e} exceeds 1e-8 of data range {data_range:.3e}"
        )
    return Volume(out.real, preds[0].spacing)

"""Self-supervised single-volume superresolution for anisotropic 3D scans.

A single low-resolution stack of thick slices is restored to an isotropic
volume by training a small residual U-Net on the volume itself: the known
through-plane degradation is synthetically applied along the sharp in-plane
axis of rotated copies to manufacture training pairs, and predictions from
a rotation ensemble are fused per-frequency by Fourier-burst accumulation.
"""

from .dataset import (
    TrainConfig,
    TrainingPair,
    build_training_set,
    ratio_from_spacing,
    training_angles,
    upsample_lowres,
)
from .fba import EnsembleConfig, fba_fuse, fba_weights, fft3, ifft3
from .metrics import EvalResult, evaluate, mse_db, ssim_masked
from .nifti import read_nifti, write_nifti
from .operators import (
    ForwardModelConfig,
    SliceProfile,
    add_gaussian_noise,
    apply_forward_model,
    blur_axis,
    delta_profile,
    downsample_axis,
    gaussian_profile,
    rotate_z,
    upsample_axis_bicubic,
)
from .phantom import PhantomSpec, generate_phantom
from .pipeline import ReconstructionJob, predict_single_angle, reconstruct, run_sair
from .unet import UNetParams, init_params, load_params, save_params, train, unet_forward
from .volume import Mask, Volume, normalize_intensities

__version__ = "0.1.0"

__all__ = [
    "EnsembleConfig",
    "EvalResult",
    "ForwardModelConfig",
    "Mask",
    "PhantomSpec",
    "ReconstructionJob",
    "SliceProfile",
    "TrainConfig",
    "TrainingPair",
    "UNetParams",
    "Volume",
    "add_gaussian_noise",
    "apply_forward_model",
    "blur_axis",
    "build_training_set",
    "delta_profile",
    "downsample_axis",
    "evaluate",
    "fba_fuse",
    "fba_weights",
    "fft3",
    "generate_phantom",
    "gaussian_profile",
    "ifft3",
    "init_params",
    "load_params",
    "mse_db",
    "normalize_intensities",
    "predict_single_angle",
    "ratio_from_spacing",
    "read_nifti",
    "reconstruct",
    "rotate_z",
    "run_sair",
    "save_params",
    "ssim_masked",
    "train",
    "training_angles",
    "unet_forward",
    "upsample_axis_bicubic",
    "upsample_lowres",
    "write_nifti",
]

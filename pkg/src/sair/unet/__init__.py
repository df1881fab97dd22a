from .network import forward_batch, loss_and_grad, unet_forward
from .params import (
    LAYER_SPECS,
    N_PARAMETERS,
    UNetParams,
    init_params,
    load_params,
    save_params,
)
from .training import AdamConfig, TrainReport, train

__all__ = [
    "LAYER_SPECS",
    "N_PARAMETERS",
    "UNetParams",
    "AdamConfig",
    "TrainReport",
    "forward_batch",
    "init_params",
    "load_params",
    "loss_and_grad",
    "save_params",
    "train",
    "unet_forward",
]

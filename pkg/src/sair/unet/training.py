"""Per-volume training loop: Adam with seeded shuffling.

Single-threaded reduction order is fixed, so a given (pairs, seed) is
bitwise reproducible. Loss becoming non-finite aborts with
TrainingDivergedError rather than returning garbage weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from .network import loss_and_grad
from .params import UNetParams, init_params

__all__ = ["AdamConfig", "TrainReport", "train"]

DEFAULT_EPOCHS = 4
DEFAULT_BATCH_SIZE = 8


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainReport:
    epoch_losses: list[float]
    final_loss: float
    epochs: int
    seed: int


class _AdamState:
    """First/second moment accumulators shaped like the parameters."""

    def __init__(self, p: UNetParams, cfg: AdamConfig):
        self.cfg = cfg
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in p.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in p.tensors.items()}

    def update(self, p: UNetParams, grads: UNetParams) -> UNetParams:
        c = self.cfg
        self.step += 1
        bc1 = 1.0 - c.beta1**self.step
        bc2 = 1.0 - c.beta2**self.step
        new = {}
        for k, w in p.tensors.items():
            g = grads.tensors[k]
            m = self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            v = self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            new[k] = w - c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
        return UNetParams(new)


def train(
    pairs,
    epochs: int = DEFAULT_EPOCHS,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    adam: AdamConfig = AdamConfig(),
    params: UNetParams | None = None,
) -> tuple[UNetParams, TrainReport]:
    """Fit the network to (input, target) slice pairs.

    Parameters are He-initialized from the same seed unless ``params`` is
    given. Each epoch visits every pair once in a seeded shuffled order,
    with Adam updates per batch; the report carries the per-epoch mean loss.
    """
    if len(pairs) == 0:
        raise ValueError("need at least one training pair")
    if params is None:
        params = init_params(seed)
    state = _AdamState(params, adam)
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    n = len(pairs)
    epoch_losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = [pairs[i] for i in order[start : start + batch_size]]
            loss, grads = loss_and_grad(params, batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at step {state.step + 1}")
            params = state.update(params, grads)
            total += loss * len(batch)
        epoch_losses.append(total / n)
    final = epoch_losses[-1] if epoch_losses else float("nan")
    return params, TrainReport(epoch_losses, final, epochs, seed)

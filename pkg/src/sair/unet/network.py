"""The residual U-Net: forward pass, reverse-mode gradients, MSE loss.

Data layout is (batch, channels, height, width). The public single-image
entry point is :func:`unet_forward`; training and prediction use the
batched ``forward_batch``/``backward_batch`` pair, which thread a tape of
per-layer caches. Gradients are exact analytic derivatives of the fixed
architecture (no general-purpose autodiff).
"""

from __future__ import annotations

import numpy as np

from . import layers as L
from .params import UNetParams

__all__ = ["unet_forward", "forward_batch", "backward_batch", "loss_and_grad", "pad_to_even"]

CONV_ORDER = ("enc1a", "enc1b", "bot1a", "bot1b", "dec1a", "dec1b", "head")


def _check_dims(h: int, w: int) -> None:
    if h < 8 or w < 8:
        raise ValueError(f"image dims too small for the network: {h}x{w} (need >= 8)")
    if h % 2 or w % 2:
        raise ValueError(f"image dims must be even, got {h}x{w} (pad upstream)")


def forward_batch(p: UNetParams, x: np.ndarray, kernel_cache: dict | None = None):
    """Run the network on a batch (B, 1, H, W); returns (out, tape).

    ``kernel_cache`` maps (layer, n1, n2) -> kernel spectrum; pass a dict to
    reuse spectra across batches when the weights are frozen (prediction).
    """
    bsz, c, h, w = x.shape
    if c != 1:
        raise ValueError(f"expected single-channel input, got {c} channels")
    _check_dims(h, w)
    t = p.tensors

    def conv(name, a):
        w = t[f"{name}.w"]
        k = w.shape[-1]
        kf = None
        if kernel_cache is not None and k > 1:
            n1, n2 = a.shape[-2] + 2 * (k // 2), a.shape[-1] + 2 * (k // 2)
            key = (name, n1, n2)
            kf = kernel_cache.get(key)
            if kf is None:
                kf = L.kernel_spectrum(w, n1, n2)
                kernel_cache[key] = kf
        return L.conv2d_forward(a, w, t[f"{name}.b"], kf=kf)

    tape: dict = {}
    a, tape["enc1a"] = conv("enc1a", x)
    a, tape["enc1a.relu"] = L.relu_forward(a)
    a, tape["enc1b"] = conv("enc1b", a)
    skip, tape["enc1b.relu"] = L.relu_forward(a)
    a, tape["pool"] = L.maxpool2_forward(skip)
    a, tape["bot1a"] = conv("bot1a", a)
    a, tape["bot1a.relu"] = L.relu_forward(a)
    a, tape["bot1b"] = conv("bot1b", a)
    a, tape["bot1b.relu"] = L.relu_forward(a)
    a = L.upsample2_forward(a)
    a = np.concatenate([a, skip], axis=1)  # channel order: upsampled | skip
    a, tape["dec1a"] = conv("dec1a", a)
    a, tape["dec1a.relu"] = L.relu_forward(a)
    a, tape["dec1b"] = conv("dec1b", a)
    a, tape["dec1b.relu"] = L.relu_forward(a)
    res, tape["head"] = L.conv2d_forward(a, t["head.w"], t["head.b"])
    out = x + res
    tape["n_bottleneck_channels"] = t["bot1b.w"].shape[0]
    return out, tape


def backward_batch(dout: np.ndarray, tape: dict) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. all parameters, given d(loss)/d(out).

    Returns a dict keyed like UNetParams.tensors. The residual path means
    d(loss)/d(input) = dout + conv-path gradient, but only parameter
    gradients are needed by training, so the input gradient is discarded.
    """
    grads: dict[str, np.ndarray] = {}

    da, grads["head.w"], grads["head.b"] = L.conv2d_backward(dout, tape["head"])
    da = L.relu_backward(da, tape["dec1b.relu"])
    da, grads["dec1b.w"], grads["dec1b.b"] = L.conv2d_backward(da, tape["dec1b"])
    da = L.relu_backward(da, tape["dec1a.relu"])
    da, grads["dec1a.w"], grads["dec1a.b"] = L.conv2d_backward(da, tape["dec1a"])
    nb = tape["n_bottleneck_channels"]
    d_up, d_skip = da[:, :nb], da[:, nb:]
    da = L.upsample2_backward(d_up)
    da = L.relu_backward(da, tape["bot1b.relu"])
    da, grads["bot1b.w"], grads["bot1b.b"] = L.conv2d_backward(da, tape["bot1b"])
    da = L.relu_backward(da, tape["bot1a.relu"])
    da, grads["bot1a.w"], grads["bot1a.b"] = L.conv2d_backward(da, tape["bot1a"])
    da = L.maxpool2_backward(da, tape["pool"])
    da = da + d_skip  # skip branch joins the pooled branch at enc1b's output
    da = L.relu_backward(da, tape["enc1b.relu"])
    da, grads["enc1b.w"], grads["enc1b.b"] = L.conv2d_backward(da, tape["enc1b"])
    da = L.relu_backward(da, tape["enc1a.relu"])
    _, grads["enc1a.w"], grads["enc1a.b"] = L.conv2d_backward(
        da, tape["enc1a"], need_dx=False
    )
    return grads


def unet_forward(p: UNetParams, img: np.ndarray) -> np.ndarray:
    """Apply the network to one 2D image (H, W); H, W even and >= 8."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    x = img.astype(p.dtype, copy=False)[None, None]
    out, _ = forward_batch(p, x)
    return out[0, 0]


def pad_to_even(x: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad the trailing two axes of a batch up to even sizes."""
    h, w = x.shape[-2:]
    ph, pw = h % 2, w % 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return x, (ph, pw)


def loss_and_grad(p: UNetParams, batch) -> tuple[float, UNetParams]:
    """Mean-squared-error loss and exact parameter gradients over a batch.

    ``batch`` is a non-empty sequence of TrainingPair-like objects with
    equal-shape ``input``/``target`` 2D arrays. Odd dims are reflect-padded
    for the forward pass; the loss is evaluated on the original extent.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    shapes = {pair.input.shape for pair in batch} | {pair.target.shape for pair in batch}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch within batch: {sorted(shapes)}")
    x = np.stack([pair.input for pair in batch]).astype(p.dtype)[:, None]
    t = np.stack([pair.target for pair in batch]).astype(p.dtype)[:, None]
    h, w = x.shape[-2:]
    xp, _ = pad_to_even(x)

    out, tape = forward_batch(p, xp)
    resid = out[:, :, :h, :w] - t
    loss = float(np.mean(resid.astype(np.float64) ** 2))

    dout = np.zeros_like(out)
    dout[:, :, :h, :w] = resid * (2.0 / resid.size)
    grads = backward_batch(dout, tape)
    return loss, UNetParams(grads)

"""Layer primitives with hand-derived backward passes.

Convolutions are cross-correlations with reflect padding (same spatial
size), evaluated in the frequency domain: reflect-pad by k//2, 2D real FFT,
per-frequency channel-mixing GEMM against the kernel spectrum, inverse FFT,
crop. With padded size n = H + 2*(k//2) and kernel support k, circular
correlation of the padded image equals the linear "valid" correlation on
the first H outputs, so no extra FFT headroom is needed.

Kernel spectra are (re)built every call from the k x k support with a
cached combined twiddle matrix, as two real GEMMs per layout; this is far
cheaper than transforming zero-padded kernels. Backward identities, all on
the same padded frequency grid (W = kernel spectrum, D = spectrum of the
zero-padded output gradient, Xp = spectrum of the padded input):

* forward        = inverse FFT of  Xp * conj(W)
* input gradient = inverse FFT of  D * W,   folded through the pad adjoint
* kernel gradient = inverse FFT of Xp * conj(D), evaluated only on the
  k x k support via the same twiddle matrices (pruned inverse transform)

Float32 tensors run in complex64; float64 (used by the gradient checks) in
complex128.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import fft as sfft

# FFT worker threads (scipy batches transforms across them; values are
# identical for any worker count, so this cannot affect reproducibility)
FFT_WORKERS = max(1, int(os.environ.get("SAIR_FFT_WORKERS", "1")))

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "kernel_spectrum",
    "relu_forward",
    "relu_backward",
    "maxpool2_forward",
    "maxpool2_backward",
    "upsample2_forward",
    "upsample2_backward",
    "reflect_pad2",
    "reflect_pad2_adjoint",
]

_TWIDDLE_CACHE: dict[tuple, tuple] = {}


def _cdtype(dtype):
    return np.complex64 if np.dtype(dtype) == np.float32 else np.complex128


def _twiddles(n1: int, n2: int, k: int, dtype):
    """Combined (F, 2*k*k) twiddle matrix for support-limited transforms.

    ``treti`` is [T_re | T_im] with
    T[(f1,f2),(t1,t2)] = exp(+2j pi f1 t1 / n1) * exp(+2j pi f2 t2 / n2),
    the conjugated forward DFT (what correlation needs). ``inv1``/``inv2``
    are small per-axis inverse matrices, with the half-spectrum doubling
    folded into the f2 axis.
    """
    rdtype = np.dtype(dtype)
    key = (n1, n2, k, rdtype.str)
    hit = _TWIDDLE_CACHE.get(key)
    if hit is not None:
        return hit
    f2n = n2 // 2 + 1
    t = np.arange(k)
    e1 = np.exp(2j * np.pi * np.arange(n1)[:, None] * t / n1)  # (n1, k)
    e2 = np.exp(2j * np.pi * np.arange(f2n)[:, None] * t / n2)  # (F2, k)
    full = e1[:, None, :, None] * e2[None, :, None, :]  # (n1, F2, k, k)
    tmat = full.reshape(n1 * f2n, k * k)
    treti = np.hstack([tmat.real, tmat.imag]).astype(rdtype)

    dbl = np.full(f2n, 2.0)
    dbl[0] = 1.0
    if n2 % 2 == 0:
        dbl[-1] = 1.0
    cdtype = _cdtype(dtype)
    inv1 = e1.astype(cdtype)  # (n1, k)
    inv2 = (dbl[:, None] * e2).astype(cdtype)  # (F2, k)
    mats = (treti, inv1, inv2)
    _TWIDDLE_CACHE[key] = mats
    return mats


def _spectrum(w2d: np.ndarray, treti: np.ndarray, sign: float) -> np.ndarray:
    """(T_re + sign*i*T_im) @ w2d for real w2d, as one real GEMM.

    The right operand interleaves real/imag columns (imag half zero-padded
    against T_re and vice versa), so the GEMM writes the complex result
    directly in interleaved memory order; the output is then just a view.
    """
    kk = w2d.shape[0]
    p = w2d.shape[1]
    rdtype = w2d.dtype
    w2 = np.zeros((2 * kk, 2 * p), dtype=rdtype)
    w2[:kk, 0::2] = w2d
    w2[kk:, 1::2] = sign * w2d
    out = treti @ w2  # (F, 2P) float, [re, im, re, im, ...]
    return out.view(_cdtype(rdtype))


def kernel_spectrum(w: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Correlation spectrum of the kernels: conj(DFT(w)) as (F, Ci, Co)."""
    co, ci, k, _ = w.shape
    treti, _, _ = _twiddles(n1, n2, k, w.dtype)
    w2d = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(k * k, ci * co)
    return _spectrum(w2d, treti, 1.0).reshape(-1, ci, co)


def reflect_pad2(x: np.ndarray, p: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")


def _reflect_adjoint_last(a: np.ndarray, p: int, n: int) -> np.ndarray:
    core = a[..., p : p + n].copy()
    core[..., 1 : p + 1] += a[..., :p][..., ::-1]
    core[..., n - 1 - p : n - 1] += a[..., n + p :][..., ::-1]
    return core


def reflect_pad2_adjoint(a: np.ndarray, p: int, h: int, w: int) -> np.ndarray:
    """Adjoint of reflect_pad2: fold border gradients onto their sources."""
    out = _reflect_adjoint_last(a, p, w)
    out = _reflect_adjoint_last(out.swapaxes(-1, -2), p, h)
    return out.swapaxes(-1, -2)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, kf: np.ndarray | None = None):
    """Same-size correlation with reflect padding.

    x (B, Ci, H, W), w (Co, Ci, k, k) with odd k, b (Co,).
    kf, if given, is a precomputed :func:`kernel_spectrum` (prediction-time
    reuse across batches). Returns (y, cache).
    """
    bsz, ci, h, wd = x.shape
    co, _, k, _ = w.shape
    if k == 1:
        w11 = w.reshape(co, ci)
        xt = x.transpose(0, 2, 3, 1).reshape(-1, ci)
        y = (xt @ w11.T).reshape(bsz, h, wd, co).transpose(0, 3, 1, 2) + b[:, None, None]
        return np.ascontiguousarray(y), ("1x1", x, w)
    p = k // 2
    n1, n2 = h + 2 * p, wd + 2 * p
    xp = reflect_pad2(x, p)
    xf = sfft.rfft2(xp, workers=FFT_WORKERS)
    f = n1 * (n2 // 2 + 1)
    xt = np.ascontiguousarray(xf.reshape(bsz, ci, f).transpose(2, 0, 1))  # (F, B, Ci)
    if kf is None:
        kf = kernel_spectrum(w, n1, n2)
    yt = np.matmul(xt, kf)  # (F, B, Co)
    yf = np.ascontiguousarray(yt.transpose(1, 2, 0)).reshape(bsz, co, n1, -1)
    y = sfft.irfft2(yf, s=(n1, n2), workers=FFT_WORKERS)[:, :, :h, :wd] + b[:, None, None]
    return y.astype(x.dtype, copy=False), ("fft", xt, kf, w.shape, x.shape)


def conv2d_backward(dy: np.ndarray, cache, need_dx: bool = True):
    """Gradients of conv2d_forward w.r.t. input, kernel, bias.

    ``need_dx=False`` skips the input gradient (first layer).
    """
    if cache[0] == "1x1":
        _, x, w = cache
        bsz, ci, h, wd = x.shape
        co = w.shape[0]
        w11 = w.reshape(co, ci)
        dyt = dy.transpose(0, 2, 3, 1).reshape(-1, co)
        xt = x.transpose(0, 2, 3, 1).reshape(-1, ci)
        dw = (dyt.T @ xt).reshape(w.shape)
        dx = (dyt @ w11).reshape(bsz, h, wd, ci).transpose(0, 3, 1, 2)
        db = dy.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(dx), dw, db

    _, xt, kf, wshape, xshape = cache
    bsz, ci, h, wd = xshape
    co, _, k, _ = wshape
    p = k // 2
    n1, n2 = h + 2 * p, wd + 2 * p
    f2n = n2 // 2 + 1
    f = n1 * f2n

    db = dy.sum(axis=(0, 2, 3))

    # rfft2 zero-pads dy up to the padded grid via the size argument
    df = sfft.rfft2(dy, s=(n1, n2), workers=FFT_WORKERS)
    dt = np.ascontiguousarray(df.reshape(bsz, co, f).transpose(2, 0, 1))  # (F, B, Co)
    dtc = np.conj(dt)

    dx = None
    if need_dx:
        # D * W with W = conj(kf): conj(conj(D) @ kf^T), conjugation in place
        dxt = np.matmul(dtc, kf.transpose(0, 2, 1))
        np.conjugate(dxt, out=dxt)
        dxf = np.ascontiguousarray(dxt.transpose(1, 2, 0)).reshape(bsz, ci, n1, f2n)
        dxp = sfft.irfft2(dxf, s=(n1, n2), workers=FFT_WORKERS)
        dx = reflect_pad2_adjoint(dxp, p, h, wd).astype(dy.dtype, copy=False)

    # kernel gradient: product spectrum, inverse-transformed on k x k only
    xtt = np.ascontiguousarray(xt.transpose(0, 2, 1))  # (F, Ci, B)
    pf = np.matmul(xtt, dtc)  # (F, Ci, Co)
    _, inv1, inv2 = _twiddles(n1, n2, k, dy.dtype)
    p2 = ci * co
    # contract f1 first (pf reshapes to (n1, F2 * Ci * Co) for free), then f2
    z1 = (inv1.T @ pf.reshape(n1, f2n * p2)).reshape(k, f2n, p2)
    z2 = np.matmul(inv2.T[None], z1)  # (k_t1, k_t2, Ci*Co)
    dw = z2.real.reshape(k, k, ci, co).transpose(3, 2, 0, 1) / (n1 * n2)
    return dx, np.ascontiguousarray(dw).astype(dy.dtype, copy=False), db


def relu_forward(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, y > 0


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; even spatial dims required."""
    bsz, c, h, w = x.shape
    xr = x.reshape(bsz, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    xr = np.ascontiguousarray(xr).reshape(bsz, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)  # ties resolve to the first max
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(dy: np.ndarray, cache) -> np.ndarray:
    idx, xshape = cache
    bsz, c, h, w = xshape
    g4 = np.zeros((bsz, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(g4, idx[..., None], dy[..., None], axis=-1)
    g = g4.reshape(bsz, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(g).reshape(bsz, c, h, w)


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 spatial upsampling."""
    return x.repeat(2, axis=-2).repeat(2, axis=-1)


def upsample2_backward(dy: np.ndarray) -> np.ndarray:
    bsz, c, h2, w2 = dy.shape
    return dy.reshape(bsz, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))

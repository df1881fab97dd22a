"""Parameter container, seeded initialization, and checkpoint I/O.

Architecture (fixed): two 7x7 conv layers at 32 channels (encoder), 2x2
maxpool, two 7x7 conv layers at 64 channels (bottleneck), nearest-neighbor
x2 upsampling, channel concat with the encoder skip (64 + 32 = 96), two 7x7
conv layers back to 32 channels (decoder), and a 1x1 projection head. The
network output is added to its input (residual form), so zero weights give
an exact identity map.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = ["LAYER_SPECS", "UNetParams", "init_params", "save_params", "load_params", "N_PARAMETERS"]

# name -> (out_channels, in_channels, kernel)
LAYER_SPECS = {
    "enc1a": (32, 1, 7),
    "enc1b": (32, 32, 7),
    "bot1a": (64, 32, 7),
    "bot1b": (64, 64, 7),
    "dec1a": (32, 96, 7),
    "dec1b": (32, 32, 7),
    "head": (1, 32, 1),
}

N_PARAMETERS = sum(co * ci * k * k + co for co, ci, k in LAYER_SPECS.values())

_MAGIC = b"SAIRUNET"
_VERSION = 1


def _tensor_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for name, (co, ci, k) in LAYER_SPECS.items():
        shapes[f"{name}.w"] = (co, ci, k, k)
        shapes[f"{name}.b"] = (co,)
    return shapes


TENSOR_SHAPES = _tensor_shapes()


@dataclass(frozen=True)
class UNetParams:
    """All weights/biases keyed ``<layer>.w`` / ``<layer>.b``.

    Shapes are pinned to the fixed architecture; also reused as the
    container for gradients and optimizer moments.
    """

    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        if set(self.tensors) != set(TENSOR_SHAPES):
            missing = set(TENSOR_SHAPES) - set(self.tensors)
            extra = set(self.tensors) - set(TENSOR_SHAPES)
            raise ValueError(f"bad tensor set: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, arr in self.tensors.items():
            if arr.shape != TENSOR_SHAPES[name]:
                raise ValueError(
                    f"{name}: shape {arr.shape}, expected {TENSOR_SHAPES[name]}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")

    @property
    def dtype(self):
        return self.tensors["enc1a.w"].dtype

    def n_parameters(self) -> int:
        return sum(arr.size for arr in self.tensors.values())

    def astype(self, dtype) -> "UNetParams":
        return UNetParams({k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "UNetParams":
        return UNetParams({k: v.copy() for k, v in self.tensors.items()})

    def equals(self, other: "UNetParams") -> bool:
        return all(np.array_equal(self.tensors[k], other.tensors[k]) for k in TENSOR_SHAPES)


def init_params(seed: int, dtype=np.float32) -> UNetParams:
    """He fan-in Gaussian init for the 7x7 convs, zeros elsewhere.

    The 1x1 head starts at zero so the residual network is an exact
    identity map at initialization (training therefore starts from the
    plain upsampled input rather than from noise). Biases are zero.
    Deterministic per seed.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    tensors: dict[str, np.ndarray] = {}
    for name, (co, ci, k) in LAYER_SPECS.items():
        if name == "head":
            w = np.zeros((co, ci, k, k))
        else:
            std = np.sqrt(2.0 / (ci * k * k))
            w = rng.standard_normal((co, ci, k, k)) * std
        tensors[f"{name}.w"] = w.astype(dtype)
        tensors[f"{name}.b"] = np.zeros(co, dtype=dtype)
    return UNetParams(tensors)


def save_params(p: UNetParams, path) -> None:
    """Write a versioned binary checkpoint (float32 tensors).

    ``load_params(save_params(p))`` is bitwise-identical for float32
    params; float64 params are cast down.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(p.tensors)))
        for name in sorted(p.tensors):
            arr = np.ascontiguousarray(p.tensors[name].astype("<f4"))
            enc = name.encode("ascii")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path) -> UNetParams:
    """Read a checkpoint written by :func:`save_params`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a network checkpoint (bad magic)")
    off = len(_MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("ascii")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        tensors[name] = arr.copy()
    return UNetParams(tensors)

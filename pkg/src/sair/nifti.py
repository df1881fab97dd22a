"""Single-file NIfTI-1 reader/writer for the subset the pipeline needs.

Supported: little-endian ``.nii`` with float32 or int16 payload and exactly
3 spatial dims. Not supported (by design): NIfTI-2, gzip streams, orientation
matrices beyond ``pixdim``, DICOM.

The writer emits a 348-byte header, vox_offset 352 (4 zero bytes for the
extension flag), float32 payload in file (x-fastest) order, and goes through
a temp file + atomic rename so a failed write never leaves partial output.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import BadMagicError, TruncatedFileError, UnsupportedFormatError
from .volume import Volume

__all__ = ["read_nifti", "write_nifti"]

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

DT_INT16 = 4
DT_FLOAT32 = 16
_DTYPES = {DT_INT16: np.dtype("<i2"), DT_FLOAT32: np.dtype("<f4")}


def read_nifti(path) -> Volume:
    """Read a single-file NIfTI-1 volume.

    Returns a Volume with dims from ``dim[1..3]``, spacing from
    ``pixdim[1..3]``, and intensities cast to float64. ``scl_slope`` is
    applied when nonzero (slope 0 means "no scaling" per the format).

    Raises
    ------
    BadMagicError, UnsupportedFormatError, TruncatedFileError
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, header needs {HEADER_SIZE}")
    if raw[344:348] != MAGIC:
        raise BadMagicError(f"{path}: magic {raw[344:348]!r}, expected {MAGIC!r}")

    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise UnsupportedFormatError(
            f"{path}: sizeof_hdr={sizeof_hdr} (big-endian or non-conforming file)"
        )
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3:
        raise UnsupportedFormatError(f"{path}: dim[0]={dim[0]}, only 3 spatial dims supported")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise UnsupportedFormatError(f"{path}: non-positive dims {dim[1:4]}")
    (datatype,) = struct.unpack_from("<h", raw, 70)
    if datatype not in _DTYPES:
        raise UnsupportedFormatError(f"{path}: datatype code {datatype} not in (int16, float32)")
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)

    dtype = _DTYPES[datatype]
    count = nx * ny * nz
    offset = int(vox_offset)
    need = offset + count * dtype.itemsize
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, payload needs {need}")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = flat.reshape((nx, ny, nz), order="F").astype(np.float64)
    if scl_slope != 0.0 and not (scl_slope == 1.0 and scl_inter == 0.0):
        data = data * float(scl_slope) + float(scl_inter)
    return Volume(data, (pixdim[1], pixdim[2], pixdim[3]))


def write_nifti(v: Volume, path) -> None:
    """Write a Volume as little-endian float32 single-file NIfTI-1.

    ``read_nifti(write_nifti(v))`` is bit-exact for float32-representable
    intensities and spacing.
    """
    nx, ny, nz = v.dims
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, DT_FLOAT32)
    struct.pack_into("<h", hdr, 72, 32)  # bitpix
    struct.pack_into("<8f", hdr, 76, 1.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    hdr[344:348] = MAGIC

    payload = np.ascontiguousarray(v.data.astype("<f4").ravel(order="F"))
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(bytes(hdr))
            fh.write(b"\x00\x00\x00\x00")  # extension flag
            fh.write(payload.tobytes())
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise

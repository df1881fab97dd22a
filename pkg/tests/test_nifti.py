import os
import struct

import numpy as np
import pytest

from helpers.oracles import decode_nifti_header, read_nifti_payload
from sair import Volume, read_nifti, write_nifti
from sair.errors import BadMagicError, TruncatedFileError, UnsupportedFormatError


def ramp_volume(dims=(2, 3, 4), spacing=(1.0, 1.0, 1.0)):
    data = np.arange(np.prod(dims), dtype=np.float32).reshape(dims).astype(np.float64)
    return Volume(data, spacing)


def write_raw_nifti(path, data, datatype, pixdim=(1.0, 1.0, 1.0), scl=(0.0, 0.0), magic=b"n+1\x00"):
    """Hand-rolled writer (independent of the library) for reader tests."""
    nx, ny, nz = data.shape
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, {4: 16, 16: 32}[datatype])
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, *scl)
    hdr[344:348] = magic
    dt = {4: "<i2", 16: "<f4"}[datatype]
    with open(path, "wb") as fh:
        fh.write(bytes(hdr))
        fh.write(b"\x00" * 4)
        fh.write(np.ascontiguousarray(data.astype(dt).ravel(order="F")).tobytes())


class TestRoundTrip:
    def test_ramp_round_trip_bit_exact(self, tmp_path):
        v = ramp_volume()
        path = tmp_path / "ramp.nii"
        write_nifti(v, path)
        back = read_nifti(path)
        assert back.dims == v.dims
        assert np.array_equal(back.data, v.data)

    def test_random_float32_values_survive(self, tmp_path, rng):
        data = rng.standard_normal((5, 6, 7)).astype(np.float32).astype(np.float64)
        v = Volume(data)
        path = tmp_path / "r.nii"
        write_nifti(v, path)
        assert np.array_equal(read_nifti(path).data, data)

    def test_clinical_spacing_survives_exactly(self, tmp_path):
        # float32-representable spacing values round-trip without change
        spacing = tuple(float(np.float32(s)) for s in (1.1, 1.1, 3.0))
        v = ramp_volume((4, 4, 4), spacing)
        path = tmp_path / "s.nii"
        write_nifti(v, path)
        assert read_nifti(path).spacing == spacing


class TestHeaderBytes:
    def test_header_fields_against_independent_decoder(self, tmp_path):
        v = ramp_volume((3, 5, 2), (0.5, 2.0, 4.0))
        path = tmp_path / "h.nii"
        write_nifti(v, path)
        hdr = decode_nifti_header(path)
        assert hdr["sizeof_hdr"] == 348
        assert hdr["magic"] == b"n+1\x00"
        assert hdr["dim"][:4] == (3, 3, 5, 2)
        assert hdr["datatype"] == 16
        assert hdr["bitpix"] == 32
        assert hdr["vox_offset"] == 352.0
        assert hdr["pixdim"][1:4] == (0.5, 2.0, 4.0)

    def test_first_four_bytes_are_348(self, tmp_path):
        path = tmp_path / "b.nii"
        write_nifti(ramp_volume(), path)
        with open(path, "rb") as fh:
            assert struct.unpack("<i", fh.read(4))[0] == 348

    def test_payload_order_x_fastest(self, tmp_path):
        v = ramp_volume((2, 3, 4))
        path = tmp_path / "o.nii"
        write_nifti(v, path)
        payload = read_nifti_payload(path, (2, 3, 4), "<f4")
        assert np.array_equal(payload.astype(np.float64), v.data)


class TestReaderFormats:
    def test_all_ones_float32(self, tmp_path):
        path = tmp_path / "ones.nii"
        write_raw_nifti(path, np.ones((4, 4, 4)), 16, pixdim=(1.0, 1.0, 3.0))
        v = read_nifti(path)
        assert v.dims == (4, 4, 4)
        assert np.all(v.data == 1.0)
        assert v.spacing == (1.0, 1.0, 3.0)

    def test_int16_with_zero_slope_keeps_integers(self, tmp_path, rng):
        values = rng.integers(0, 101, size=(6, 5, 4))
        path = tmp_path / "i.nii"
        write_raw_nifti(path, values, 4, scl=(0.0, 0.0))
        v = read_nifti(path)
        assert np.array_equal(v.data, values.astype(np.float64))

    def test_int16_with_scaling_applies_affine(self, tmp_path, rng):
        values = rng.integers(-50, 50, size=(4, 4, 4))
        path = tmp_path / "sc.nii"
        write_raw_nifti(path, values, 4, scl=(2.5, 10.0))
        v = read_nifti(path)
        assert np.allclose(v.data, values * 2.5 + 10.0)


class TestReaderErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nii"
        write_raw_nifti(path, np.ones((3, 3, 3)), 16, magic=b"ni1\x00")
        with pytest.raises(BadMagicError):
            read_nifti(path)

    def test_unsupported_datatype(self, tmp_path):
        path = tmp_path / "f64.nii"
        write_raw_nifti(path, np.ones((3, 3, 3)), 16)
        with open(path, "r+b") as fh:
            fh.seek(70)
            fh.write(struct.pack("<h", 64))  # float64 code
        with pytest.raises(UnsupportedFormatError):
            read_nifti(path)

    def test_unsupported_dim_count(self, tmp_path):
        path = tmp_path / "d4.nii"
        write_raw_nifti(path, np.ones((3, 3, 3)), 16)
        with open(path, "r+b") as fh:
            fh.seek(40)
            fh.write(struct.pack("<h", 4))
        with pytest.raises(UnsupportedFormatError):
            read_nifti(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.nii"
        write_raw_nifti(path, np.ones((4, 4, 4)), 16)
        size = os.path.getsize(path)
        with open(path, "r+b") as fh:
            fh.truncate(size - 10)
        with pytest.raises(TruncatedFileError):
            read_nifti(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "th.nii"
        path.write_bytes(b"\x00" * 100)
        with pytest.raises(TruncatedFileError):
            read_nifti(path)


class TestAtomicWrite:
    def test_unwritable_path_raises_and_leaves_nothing(self, tmp_path):
        target_dir = tmp_path / "missing"
        with pytest.raises(OSError):
            write_nifti(ramp_volume(), target_dir / "x.nii")
        assert not target_dir.exists()

    def test_no_temp_residue_after_success(self, tmp_path):
        path = tmp_path / "ok.nii"
        write_nifti(ramp_volume(), path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["ok.nii"]

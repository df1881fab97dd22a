import numpy as np
import pytest

from sair import Mask, Volume, normalize_intensities
from sair.errors import ConstantVolumeError


class TestVolume:
    def test_valid_construction(self, rng):
        v = Volume(rng.random((3, 4, 5)), (1.0, 1.1, 3.0))
        assert v.dims == (3, 4, 5)
        assert v.spacing == (1.0, 1.1, 3.0)
        assert v.resolution_ratio == pytest.approx(3.0)

    def test_rejects_non_3d(self):
        with pytest.raises(ValueError):
            Volume(np.zeros((4, 4)))

    def test_rejects_non_finite(self):
        data = np.zeros((3, 3, 3))
        data[1, 1, 1] = np.nan
        with pytest.raises(ValueError):
            Volume(data)

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValueError):
            Volume(np.zeros((3, 3, 3)), (1.0, 0.0, 1.0))
        with pytest.raises(ValueError):
            Volume(np.zeros((3, 3, 3)), (1.0, -2.0, 1.0))

    def test_data_is_immutable(self, small_volume):
        with pytest.raises(ValueError):
            small_volume.data[0, 0, 0] = 5.0


class TestMask:
    def test_count(self):
        data = np.zeros((4, 4, 4), dtype=bool)
        data[:2] = True
        assert Mask(data).count == 32

    def test_rejects_non_3d(self):
        with pytest.raises(ValueError):
            Mask(np.zeros((4, 4), dtype=bool))


class TestNormalize:
    def test_uniform_range_maps_to_unit(self, rng):
        # oracle: order statistics of the sorted sample
        data = rng.random((20, 20, 20)) * 100.0
        v, scale = normalize_intensities(Volume(data))
        flat = np.sort(data.ravel())
        lo = np.percentile(data, 0.5)
        hi = np.percentile(data, 99.5)
        assert scale.lo == pytest.approx(lo)
        assert scale.hi == pytest.approx(hi)
        assert v.data.min() == 0.0  # 0.5% of voxels clamp to exactly 0
        assert v.data.max() == 1.0
        assert flat[0] < lo < flat[len(flat) // 50]

    def test_two_point_volume_nearly_unchanged(self, rng):
        data = (rng.random((16, 16, 16)) > 0.5).astype(float)
        v, _ = normalize_intensities(Volume(data))
        assert set(np.unique(v.data)) == {0.0, 1.0}
        # percentile anchors sit on the extremes, so the map is identity up to clamp
        assert np.array_equal(v.data, data)

    def test_inverse_round_trip(self, rng):
        data = rng.random((16, 16, 16)) * 7.0 + 3.0
        v, scale = normalize_intensities(Volume(data))
        lo = np.percentile(data, 0.5)
        hi = np.percentile(data, 99.5)
        interior = (data >= lo) & (data <= hi)  # the unclamped ~99% of voxels
        assert interior.mean() > 0.98
        back = scale.invert(v.data)
        rel = np.abs(back[interior] - data[interior]) / np.abs(data[interior])
        assert rel.max() < 1e-6

    def test_monotone(self, rng):
        data = rng.random((12, 12, 12))
        v, _ = normalize_intensities(Volume(data))
        a = data.ravel()
        b = v.data.ravel()
        order = np.argsort(a, kind="stable")
        assert np.all(np.diff(b[order]) >= 0.0)

    def test_constant_volume_rejected(self):
        with pytest.raises(ConstantVolumeError):
            normalize_intensities(Volume(np.full((8, 8, 8), 3.5)))

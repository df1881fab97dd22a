import math

import numpy as np
import pytest

from helpers.oracles import catmull_rom_1d, conv1d_mirror
from sair import (
    ForwardModelConfig,
    Volume,
    add_gaussian_noise,
    apply_forward_model,
    blur_axis,
    delta_profile,
    downsample_axis,
    gaussian_profile,
    rotate_z,
    upsample_axis_bicubic,
)
from sair.operators import SliceProfile, rotation_valid_mask


class TestSliceProfile:
    def test_validation(self):
        with pytest.raises(ValueError):
            SliceProfile(np.array([0.5, 0.5]))  # even support
        with pytest.raises(ValueError):
            SliceProfile(np.array([0.2, 0.5, 0.2]))  # sum != 1
        with pytest.raises(ValueError):
            SliceProfile(np.array([0.1, 0.6, 0.3]))  # asymmetric

    def test_gaussian_sums_to_one(self):
        for r in (1, 2, 3, 4, 5, 6):
            taps = gaussian_profile(r).taps
            assert abs(taps.sum() - 1.0) <= 1e-12

    def test_gaussian_r1_near_delta(self):
        # oracle: evaluate the formula; sigma = 1/(2 sqrt(2 ln 2)),
        # support +-2, taps exp(-k^2/(2 sigma^2)) renormalized.
        sigma = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        k = np.arange(-2, 3)
        expected = np.exp(-(k**2) / (2 * sigma**2))
        expected /= expected.sum()
        taps = gaussian_profile(1).taps
        assert taps.shape == (5,)
        assert np.allclose(taps, expected, atol=1e-15)
        # near-delta: the computed center tap is 1/(1 + 2/16 + 2/65536)
        # = 0.888865; dominant but not above 0.9 with this truncation rule
        assert taps[2] == pytest.approx(1.0 / (1.0 + 2.0 / 16 + 2.0 / 65536), rel=1e-12)
        assert taps[2] == pytest.approx(16.0 * taps[1], rel=1e-12)

    def test_gaussian_r4_fwhm(self):
        taps = gaussian_profile(4).taps
        env = taps / taps.max()
        c = len(env) // 2
        k = int(np.argmax(env[c:] < 0.5))  # first tap below half max
        lo, hi = env[c + k - 1], env[c + k]
        crossing = (k - 1) + (lo - 0.5) / (lo - hi)
        fwhm = 2.0 * crossing
        assert abs(fwhm - 4.0) / 4.0 < 0.02

    def test_ratio_below_one_rejected(self):
        with pytest.raises(ValueError):
            gaussian_profile(0.5)


class TestBlur:
    def test_dc_preservation(self):
        v = Volume(np.full((6, 7, 8), 3.25))
        for r in (2, 4):
            out = blur_axis(v, gaussian_profile(r), "z")
            assert np.max(np.abs(out.data - 3.25)) < 1e-12

    def test_impulse_response_reproduces_taps(self):
        prof = gaussian_profile(2)
        rad = prof.radius
        data = np.zeros((5, 5, 21))
        data[2, 2, 10] = 1.0
        out = blur_axis(Volume(data), prof, "z")
        assert np.allclose(out.data[2, 2, 10 - rad : 10 + rad + 1], prof.taps, atol=1e-15)
        assert out.data[1, 2, 10] == 0.0

    def test_matches_brute_force(self, small_volume):
        prof = gaussian_profile(3)
        for axis_name, axis in (("x", 0), ("y", 1), ("z", 2)):
            got = blur_axis(small_volume, prof, axis_name)
            want = conv1d_mirror(small_volume.data, prof.taps, axis)
            assert np.max(np.abs(got.data - want)) < 1e-10

    def test_kernel_too_long(self):
        v = Volume(np.zeros((4, 4, 4)))
        taps = np.full(9, 1.0 / 9.0)
        with pytest.raises(ValueError):
            blur_axis(v, SliceProfile(taps), "z")

    def test_linearity(self, rng):
        prof = gaussian_profile(4)
        u = Volume(rng.random((6, 6, 12)))
        w = Volume(rng.random((6, 6, 12)))
        lhs = blur_axis(Volume(2.0 * u.data + 3.0 * w.data), prof, "z").data
        rhs = 2.0 * blur_axis(u, prof, "z").data + 3.0 * blur_axis(w, prof, "z").data
        assert np.max(np.abs(lhs - rhs)) < 1e-10


class TestDownsample:
    def test_ramp_decimation(self):
        data = np.broadcast_to(np.arange(12.0), (3, 3, 12)).copy()
        out = downsample_axis(Volume(data), 3, "z")
        assert out.dims == (3, 3, 4)
        assert np.array_equal(out.data[0, 0], [0.0, 3.0, 6.0, 9.0])

    def test_r1_identity(self, small_volume):
        out = downsample_axis(small_volume, 1, "z")
        assert np.array_equal(out.data, small_volume.data)

    def test_floor_rule_for_non_divisible(self):
        data = np.zeros((2, 2, 13))
        out = downsample_axis(Volume(data), 3, "z")
        assert out.dims[2] == 4  # floor(13/3), not ceil

    def test_spacing_multiplied(self):
        v = Volume(np.zeros((4, 4, 8)), (1.0, 1.0, 1.0))
        assert downsample_axis(v, 4, "z").spacing == (1.0, 1.0, 4.0)

    def test_r_exceeds_axis(self):
        with pytest.raises(ValueError):
            downsample_axis(Volume(np.zeros((4, 4, 4))), 5, "z")

    def test_nyquist_attenuation_matches_dtft(self):
        # cosine at the coarse-grid Nyquist; phase chosen even about both
        # boundaries, so the mirror extension is the true cosine and the
        # analytic response holds exactly everywhere
        r = 4
        n = 4 * 12 + 1
        prof = gaussian_profile(r)
        k = np.arange(n)
        omega = np.pi / r
        x = np.cos(omega * k)
        v = Volume(np.broadcast_to(x, (3, 3, n)).copy())
        blurred = blur_axis(v, prof, "z")
        j = np.arange(-prof.radius, prof.radius + 1)
        gain = float(np.sum(prof.taps * np.cos(omega * j)))
        assert np.max(np.abs(blurred.data[0, 0] - gain * x)) < 1e-6
        coarse = downsample_axis(blurred, r, "z")
        m = np.arange(coarse.dims[2])
        assert np.max(np.abs(coarse.data[0, 0] - gain * np.cos(np.pi * m))) < 1e-6


class TestUpsample:
    def test_constant_preserved(self):
        v = Volume(np.full((4, 4, 6), 2.5))
        out = upsample_axis_bicubic(v, 3, "z")
        assert out.dims == (4, 4, 18)
        assert np.max(np.abs(out.data - 2.5)) < 1e-12

    def test_on_grid_exact(self, small_volume):
        out = upsample_axis_bicubic(small_volume, 4, "z")
        assert np.array_equal(out.data[:, :, ::4], small_volume.data)

    def test_linear_ramp_reproduced(self):
        n, r = 10, 3
        data = np.broadcast_to(np.arange(n, dtype=float), (4, 4, n)).copy()
        out = upsample_axis_bicubic(Volume(data), r, "z")
        fine = np.arange(n * r) / r
        # clamped stencil bends the extrapolation near the ends
        interior = slice(r, (n - 2) * r)
        assert np.max(np.abs(out.data[0, 0][interior] - fine[interior])) < 1e-10

    def test_matches_scalar_oracle(self, rng):
        samples = rng.random(7)
        data = np.broadcast_to(samples, (4, 4, 7)).copy()
        out = upsample_axis_bicubic(Volume(data), 2, "z")
        for j in range(14):
            want = catmull_rom_1d(samples, j / 2.0)
            assert out.data[2, 1, j] == pytest.approx(want, abs=1e-12)

    def test_spacing_divided(self):
        v = Volume(np.zeros((4, 4, 6)), (1.0, 1.0, 4.0))
        assert upsample_axis_bicubic(v, 4, "z").spacing == (1.0, 1.0, 1.0)

    def test_too_short_axis(self):
        with pytest.raises(ValueError):
            upsample_axis_bicubic(Volume(np.zeros((4, 4, 3))), 2, "z")


class TestRotate:
    def test_theta_zero_exact(self, small_volume):
        out = rotate_z(small_volume, 0.0)
        assert np.array_equal(out.data, small_volume.data)

    def test_ninety_degree_permutation(self, smooth_volume):
        out = rotate_z(smooth_volume, 90.0)
        n = smooth_volume.dims[0]
        # oracle: out(x, y) samples the source at R(-90)(p - c) + c, i.e.
        # out[x, y] = in[y, n-1-x] -- an exact index permutation
        perm = smooth_volume.data[:, ::-1, :].transpose(1, 0, 2)
        interior = slice(2, n - 2)
        diff = np.abs(out.data - perm)[interior, interior, :]
        assert diff.max() < 1e-6

    def test_round_trip_interior(self, smooth_volume):
        n = smooth_volume.dims[0]
        back = rotate_z(rotate_z(smooth_volume, 33.0), -33.0)
        x, y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        c = (n - 1) / 2.0
        inside = (x - c) ** 2 + (y - c) ** 2 <= (0.85 * n / 2) ** 2
        diff = np.abs(back.data - smooth_volume.data)[inside]
        assert diff.max() < 1e-2

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            rotate_z(Volume(np.zeros((4, 6, 4))), 10.0)

    def test_valid_mask_coverage(self):
        m = rotation_valid_mask(64, 64, 45.0)
        assert 0.7 < m.mean() < 0.9  # octagon overlap ~0.83
        assert rotation_valid_mask(64, 64, 0.0).all()

    def test_linearity(self, rng):
        u = rng.random((12, 12, 3))
        w = rng.random((12, 12, 3))
        lhs = rotate_z(Volume(2.0 * u + 3.0 * w), 25.0).data
        rhs = 2.0 * rotate_z(Volume(u), 25.0).data + 3.0 * rotate_z(Volume(w), 25.0).data
        assert np.max(np.abs(lhs - rhs)) < 1e-10


class TestNoise:
    def test_sigma_zero_identity(self, small_volume):
        out = add_gaussian_noise(small_volume, 0.0, seed=3)
        assert np.array_equal(out.data, small_volume.data)

    def test_sample_std(self):
        v = Volume(np.zeros((96, 96, 96)))
        out = add_gaussian_noise(v, 0.1, seed=11)
        assert 0.099 < out.data.std() < 0.101

    def test_deterministic_per_seed(self, small_volume):
        a = add_gaussian_noise(small_volume, 0.5, seed=42)
        b = add_gaussian_noise(small_volume, 0.5, seed=42)
        c = add_gaussian_noise(small_volume, 0.5, seed=43)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_negative_sigma_rejected(self, small_volume):
        with pytest.raises(ValueError):
            add_gaussian_noise(small_volume, -0.1, seed=0)


class TestForwardModel:
    def test_constant_noiseless(self):
        v = Volume(np.full((8, 8, 8), 1.5))
        cfg = ForwardModelConfig(2, gaussian_profile(2), 0.0, 0)
        out = apply_forward_model(v, cfg, "z")
        assert out.dims == (8, 8, 4)
        assert np.max(np.abs(out.data - 1.5)) < 1e-12

    def test_equals_hand_chained_operators(self, small_volume):
        cfg = ForwardModelConfig(2, gaussian_profile(2), 0.05, seed=9)
        got = apply_forward_model(small_volume, cfg, "z")
        want = add_gaussian_noise(
            downsample_axis(blur_axis(small_volume, cfg.profile, "z"), 2, "z"), 0.05, 9
        )
        assert np.array_equal(got.data, want.data)

    def test_permutation_equivariance(self, small_volume):
        cfg = ForwardModelConfig(2, gaussian_profile(2), 0.0, 0)
        along_x = apply_forward_model(small_volume, cfg, "x")
        swapped = Volume(small_volume.data.transpose(2, 1, 0))
        along_z = apply_forward_model(swapped, cfg, "z")
        assert np.max(np.abs(along_x.data - along_z.data.transpose(2, 1, 0))) < 1e-12

    def test_delta_profile_r1_identity(self, small_volume):
        cfg = ForwardModelConfig(1, delta_profile(), 0.0, 0)
        out = apply_forward_model(small_volume, cfg, "z")
        assert np.array_equal(out.data, small_volume.data)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ForwardModelConfig(0, delta_profile(), 0.0, 0)
        with pytest.raises(ValueError):
            ForwardModelConfig(2, delta_profile(), -1.0, 0)

#!/usr/bin/env python3
"""
Tests for the Fourier power spectrum and its azimuthal integration
"""

import csv
import sys

import numpy as np
import pytest

from dataio import ImageBatch, make_synthetic
from errors import ContractError, DimensionError
from spectrum import (CSV_FIELDS, azimuthal_profile, image_profile, max_radius, plot_profiles,
                      power_spectrum2d, profile_stats, radius_map, spectrum_rows, to_grayscale,
                      write_spectrum_csv)


def brute_force_spectrum(image):
    r = image.shape[0]
    k = np.arange(r)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / r)
    return np.abs(np.fft.fftshift(basis @ image @ basis)) ** 2


class TestRadii:
    @pytest.mark.parametrize('resolution,k', [(8, 5), (16, 11), (32, 22)])
    def test_max_radius(self, resolution, k):
        assert max_radius(resolution) == k

    def test_radius_map(self):
        radii = radius_map(8)
        assert radii[4, 4] == 0
        assert radii[4, 7] == 3
        assert radii.max() == 5
        assert radii.min() == 0


class TestPowerSpectrum:
    def test_matches_explicit_dft(self, rng):
        image = rng.standard_normal((8, 8))
        np.testing.assert_allclose(power_spectrum2d(image), brute_force_spectrum(image), rtol=1e-9, atol=1e-9)

    def test_parseval(self, rng):
        image = rng.standard_normal((16, 16))
        assert power_spectrum2d(image).sum() == pytest.approx(16 * 16 * np.sum(image ** 2), rel=1e-10)

    def test_constant_image_has_only_dc(self):
        profile = azimuthal_profile(power_spectrum2d(np.full((8, 8), 0.5)))
        assert profile[0] == pytest.approx((64 * 0.5) ** 2)
        assert np.allclose(profile[1:], 0.0, atol=1e-20)

    def test_checkerboard_energy_at_highest_bin(self):
        rows, cols = np.indices((8, 8))
        board = ((rows + cols) % 2) * 2.0 - 1.0
        profile = azimuthal_profile(power_spectrum2d(board))
        assert int(np.argmax(profile)) == max_radius(8)

    def test_requires_square(self):
        with pytest.raises(DimensionError):
            power_spectrum2d(np.zeros((4, 6)))
        with pytest.raises(DimensionError):
            power_spectrum2d(np.zeros((1, 1)))


class TestAzimuthalProfile:
    def test_bins_partition_spectrum(self, rng):
        ps = power_spectrum2d(rng.standard_normal((32, 32)))
        profile = azimuthal_profile(ps)
        assert len(profile) == 23
        assert profile.sum() == pytest.approx(ps.sum(), rel=1e-12)

    def test_binning_is_exact(self, rng):
        ps = rng.uniform(0, 1, size=(8, 8))
        radii = radius_map(8)
        profile = azimuthal_profile(ps)
        for k in range(len(profile)):
            assert profile[k] == pytest.approx(ps[radii == k].sum(), rel=1e-12, abs=0)

    def test_impulse_closed_form(self):
        image = np.zeros((8, 8))
        image[3, 5] = 1.0
        profile = azimuthal_profile(power_spectrum2d(image))
        np.testing.assert_allclose(profile, np.bincount(radius_map(8).ravel()), rtol=1e-12)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(200):
            r = int(rng.integers(4, 33))
            image = rng.standard_normal((r, r))
            power = brute_force_spectrum(image)
            k = int(np.floor(np.sqrt(2.0) * r / 2))
            expected = np.zeros(k + 1)
            for i in range(r):
                for j in range(r):
                    expected[min(int(round(np.hypot(i - r // 2, j - r // 2))), k)] += power[i, j]
            np.testing.assert_allclose(azimuthal_profile(power_spectrum2d(image)), expected, rtol=1e-9, atol=1e-9)

    def test_normalize(self, rng):
        profile = azimuthal_profile(power_spectrum2d(rng.standard_normal((8, 8)) + 1.0), normalize=True)
        assert profile[0] == 1.0

    def test_circular_shift_keeps_profile(self, rng):
        image = rng.uniform(-1, 1, size=(3, 8, 8))
        for _ in range(5):
            dy, dx = (int(v) for v in rng.integers(0, 8, size=2))
            shifted = np.roll(image, (dy, dx), axis=(1, 2))
            np.testing.assert_allclose(image_profile(shifted), image_profile(image), rtol=1e-9, atol=1e-9)

    def test_normalized_profile_ignores_scale(self, rng):
        image = rng.uniform(0.1, 1.0, size=(16, 16))
        np.testing.assert_allclose(image_profile(3.7 * image, normalize=True),
                                   image_profile(image, normalize=True), rtol=1e-12)

    def test_normalize_zero_dc(self):
        with pytest.raises(ContractError):
            azimuthal_profile(np.zeros((8, 8)), normalize=True)


class TestGrayscale:
    def test_passthrough(self, rng):
        image = rng.standard_normal((8, 8))
        assert np.array_equal(to_grayscale(image), image)

    def test_luminance(self):
        image = np.zeros((3, 4, 4))
        image[0] = 1.0
        assert np.allclose(to_grayscale(image), 0.299 + 0.587 * 0.5 + 0.114 * 0.5)

    def test_single_channel(self):
        assert np.allclose(to_grayscale(np.full((1, 4, 4), -1.0)), 0.0)

    def test_rejects_other_channel_counts(self):
        with pytest.raises(DimensionError):
            to_grayscale(np.zeros((2, 4, 4)))


class TestProfileStats:
    def test_identical_images_have_zero_variance(self, rng):
        image = rng.uniform(-1, 1, size=(3, 8, 8))
        stats = profile_stats(np.stack([image] * 4))
        assert np.all(stats.variance == 0)
        np.testing.assert_allclose(stats.mean, image_profile(image))
        assert stats.n_images == 4 and stats.resolution == 8

    def test_population_variance(self):
        images = [np.full((8, 8), 0.0), np.full((8, 8), 1.0)]
        stats = profile_stats(images)
        assert stats.mean[0] == pytest.approx(64.0 ** 2 / 2)
        assert stats.variance[0] == pytest.approx((64.0 ** 2 / 2) ** 2)

    def test_accepts_image_batch(self):
        batch = make_synthetic('checkerboard', 6, 16, seed=0)
        stats = profile_stats(batch, normalize=True)
        assert len(stats.bins) == max_radius(16) + 1
        assert np.allclose(stats.mean[0], 1.0)

    def test_pooled_statistics_recombine(self, rng):
        a, b = rng.uniform(-1, 1, size=(5, 3, 8, 8)), rng.uniform(-1, 1, size=(9, 3, 8, 8))
        sa, sb, pooled = profile_stats(a), profile_stats(b), profile_stats(np.concatenate([a, b]))
        mean = (5 * sa.mean + 9 * sb.mean) / 14
        variance = (5 * (sa.variance + (sa.mean - mean) ** 2) + 9 * (sb.variance + (sb.mean - mean) ** 2)) / 14
        np.testing.assert_allclose(pooled.mean, mean, rtol=1e-12)
        np.testing.assert_allclose(pooled.variance, variance, rtol=1e-9)

    def test_mixed_resolutions(self, rng):
        with pytest.raises(DimensionError):
            profile_stats([rng.standard_normal((8, 8)), rng.standard_normal((16, 16))])

    def test_empty(self):
        with pytest.raises(ContractError):
            profile_stats([])


class TestOutputs:
    def test_csv_single_set(self, tmp_path, rng):
        stats = profile_stats(ImageBatch(rng.uniform(-1, 1, size=(4, 3, 32, 32))))
        path = write_spectrum_csv(tmp_path / 'spectrum.csv', stats)
        with open(path, newline='') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 23
        assert list(rows[0]) == CSV_FIELDS
        assert rows[0]['bin'] == '0' and rows[-1]['bin'] == '22'
        assert rows[0]['mean_b'] == '' and rows[0]['var_b'] == ''

    def test_csv_two_sets(self, tmp_path, rng):
        a = profile_stats(rng.uniform(-1, 1, size=(3, 1, 8, 8)))
        b = profile_stats(rng.uniform(-1, 1, size=(5, 1, 8, 8)))
        rows = spectrum_rows(a, b)
        assert len(rows) == 6
        assert rows[2]['mean_b'] == pytest.approx(b.mean[2])

    def test_mismatched_bins(self, rng):
        a = profile_stats(rng.uniform(-1, 1, size=(2, 1, 8, 8)))
        b = profile_stats(rng.uniform(-1, 1, size=(2, 1, 16, 16)))
        with pytest.raises(DimensionError):
            spectrum_rows(a, b)

    def test_plot(self, tmp_path, rng):
        a = profile_stats(rng.uniform(-1, 1, size=(3, 3, 8, 8)))
        path = plot_profiles(tmp_path / 'spectrum.png', a, a, labels=('real', 'fake'))
        assert path.exists() and path.stat().st_size > 0


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))

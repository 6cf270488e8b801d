"""
Tests for the dual-tree complex wavelet transform.
"""

import numpy as np
import pytest
from scipy import signal

from dtscat.dtcwt import (
    ORIENTATIONS,
    DtcwtPyramid,
    TransformError,
    decompose_1d,
    forward,
    inverse,
    load_default_filters,
    reconstruct_1d,
)


class TestFilters:
    """Test the embedded filter set."""

    def test_qshift_lowpass_sums_to_sqrt2(self, filters):
        """Q-shift lowpass filters have DC gain sqrt(2)."""
        assert filters.h0a.sum() == pytest.approx(np.sqrt(2.0), abs=1e-6)
        assert filters.h0b.sum() == pytest.approx(np.sqrt(2.0), abs=1e-6)

    def test_level1_pair_lengths(self, filters):
        """Level 1 uses the near-symmetric 13/19-tap pair."""
        assert filters.h0o.size == 13 and filters.h1o.size == 19
        assert filters.g0o.size == 19 and filters.g1o.size == 13
        assert filters.h0o.sum() == pytest.approx(1.0, abs=1e-12)
        assert filters.h1o.sum() == pytest.approx(0.0, abs=1e-12)

    def test_trees_are_time_reversed(self, filters):
        """Tree b filters are the time reverse of tree a."""
        np.testing.assert_array_equal(filters.h0b, filters.h0a[::-1])
        np.testing.assert_array_equal(filters.h1b, filters.h1a[::-1])

    def test_quarter_sample_delay(self, filters):
        """Tree a and tree b lowpass filters differ by half a sample of group delay."""
        assert filters.qshift_delay() == pytest.approx(0.5, abs=0.05)

    def test_default_filters_are_cached(self):
        """Repeated loads return the same immutable set."""
        first = load_default_filters()
        assert load_default_filters() is first
        with pytest.raises(ValueError):
            first.h0a[0] = 1.0


class TestForwardShapes:
    """Test subband geometry."""

    def test_subband_sizes_halve_per_level(self, rng):
        """A 64x64 image gives 32, 16, 8, 4 and 2 pixel subbands over 5 levels."""
        pyramid = forward(rng.random((64, 64)), 5)
        assert pyramid.levels == 5
        for level, side in enumerate((32, 16, 8, 4, 2), start=1):
            assert pyramid.highpasses[level - 1].shape == (side, side, 6)
            assert pyramid.subband(level, 0).shape == (side, side)
        assert pyramid.lowpass.shape == (4, 4)
        assert len(ORIENTATIONS) == 6

    def test_trailing_axes_are_batched(self, rng):
        """Stacked images transform the same as one at a time."""
        stack = rng.random((32, 32, 3))
        batched = forward(stack, 3)
        for c in range(3):
            single = forward(stack[:, :, c], 3)
            for level in range(3):
                np.testing.assert_allclose(batched.highpasses[level][..., c], single.highpasses[level], atol=1e-12)

    def test_subband_level_out_of_range(self, rng):
        """Asking for a missing level raises."""
        pyramid = forward(rng.random((32, 32)), 2)
        with pytest.raises(TransformError):
            pyramid.subband(3, 0)


class TestPerfectReconstruction:
    """Test that the inverse undoes the forward transform."""

    def test_random_images(self, rng):
        """200 random images across sizes and depths reconstruct to 1e-8."""
        cases = [(side, levels) for side in (32, 48, 64) for levels in (1, 2, 3, 4)]
        counts = np.bincount(rng.integers(len(cases), size=200), minlength=len(cases))
        for (side, levels), count in zip(cases, counts):
            if count == 0:
                continue
            images = rng.random((side, side, count))
            restored = inverse(forward(images, levels))
            assert restored.shape == images.shape
            assert np.max(np.abs(restored - images)) < 1e-8, (side, levels)

    def test_sizes_needing_extension(self, rng):
        """Odd sizes and lowpass planes that are not multiples of 4 still reconstruct."""
        for shape, levels in (((33, 35), 2), ((30, 30), 3), ((40, 24), 3)):
            image = rng.random(shape)
            np.testing.assert_allclose(inverse(forward(image, levels)), image, atol=1e-8)

    def test_zero_pyramid(self):
        """An all-zero pyramid reconstructs to an all-zero image."""
        pyramid = forward(np.zeros((32, 32)), 3)
        assert not np.any(inverse(pyramid))

    def test_single_coefficient_synthesis_atom(self, filters):
        """A lone level-1 coefficient reconstructs to its separable synthesis atom."""
        pyramid = forward(np.zeros((64, 64)), 1)
        pyramid.highpasses[0][16, 16, 0] = 1.0

        quad = np.zeros((64, 64))
        quad[32, 32] = 1 / np.sqrt(2.0)
        quad[33, 33] = -1 / np.sqrt(2.0)
        expected = signal.convolve2d(quad, np.outer(filters.g1o, filters.g0o), mode="same")

        np.testing.assert_allclose(inverse(pyramid), expected, atol=1e-12)

    def test_mismatched_pyramid(self, rng):
        """Subbands that do not fit the lowpass are rejected."""
        pyramid = forward(rng.random((32, 32)), 2)
        broken = DtcwtPyramid(pyramid.lowpass[:-2], pyramid.highpasses, pyramid.original_shape)
        with pytest.raises(TransformError):
            inverse(broken)


class TestTransformProperties:
    """Test linearity, constants and directional selectivity."""

    def test_linearity(self, rng):
        """forward(a x + b y) equals a forward(x) + b forward(y)."""
        x, y = rng.random((32, 32)), rng.random((32, 32))
        combined = forward(2.5 * x - 0.75 * y, 3)
        px, py = forward(x, 3), forward(y, 3)
        for level in range(3):
            np.testing.assert_allclose(
                combined.highpasses[level], 2.5 * px.highpasses[level] - 0.75 * py.highpasses[level], atol=1e-10
            )
        np.testing.assert_allclose(combined.lowpass, 2.5 * px.lowpass - 0.75 * py.lowpass, atol=1e-10)

    def test_constant_image(self):
        """A constant image has (near) zero highpasses and a constant lowpass."""
        pyramid = forward(np.full((64, 64), 0.5), 4)
        assert np.max(np.abs(pyramid.highpasses[0])) < 1e-10
        for bands in pyramid.highpasses[1:]:
            assert np.max(np.abs(bands)) < 1e-5
        np.testing.assert_allclose(pyramid.lowpass, 0.5 * 2.0 ** 3, rtol=1e-9)

    @pytest.mark.parametrize("level", [2, 3])
    def test_oriented_gratings(self, level):
        """Each of six oriented gratings puts at least 5x more energy in one band than in any other."""
        yy, xx = np.mgrid[0:128, 0:128].astype(np.float64)
        dominant = []
        for angle in ORIENTATIONS:
            theta = np.deg2rad(angle)
            radius = (1.67 if angle in (45, 135) else 1.8) / 2 ** (level - 2)
            grating = np.cos(radius * (np.cos(theta) * xx + np.sin(theta) * yy))
            bands = forward(grating, level).highpasses[level - 1][3:-3, 3:-3]
            energy = np.sum(np.abs(bands) ** 2, axis=(0, 1))
            best = int(np.argmax(energy))
            others = np.delete(energy, best)
            assert energy[best] >= 5.0 * others.max(), angle
            dominant.append(best)
        assert sorted(dominant) == list(range(6))

    def test_mirror_gratings_separate(self):
        """A grating and its mirror image about the vertical axis peak in different bands."""
        yy, xx = np.mgrid[0:64, 0:64].astype(np.float64)
        theta = np.deg2rad(15)
        peaks = []
        for sign in (1.0, -1.0):
            grating = np.cos(1.8 * (np.cos(theta) * xx + sign * np.sin(theta) * yy))
            energy = np.sum(np.abs(forward(grating, 2).highpasses[1][3:-3, 3:-3]) ** 2, axis=(0, 1))
            peaks.append(int(np.argmax(energy)))
        assert peaks[0] != peaks[1]

    def test_shift_stability_of_magnitudes(self, rng):
        """Subband magnitudes move less under a one-pixel shift than real parts do."""
        images = [signal.convolve2d(rng.standard_normal((64, 64)), np.ones((3, 3)) / 9, mode="same", boundary="wrap")
                  for _ in range(5)]
        for level in (2, 3):
            complex_change, real_change = [], []
            for image in images:
                before = forward(image, 4).highpasses[level - 1][1:-1, 1:-1]
                after = forward(np.roll(image, 1, axis=1), 4).highpasses[level - 1][1:-1, 1:-1]
                complex_change.append(np.linalg.norm(np.abs(after) - np.abs(before)) / np.linalg.norm(before))
                real_change.append(
                    np.linalg.norm(np.abs(after.real) - np.abs(before.real)) / np.linalg.norm(before.real)
                )
            assert np.mean(complex_change) < np.mean(real_change), level


class TestOneDimensional:
    """Test the 1D analysis and synthesis pair."""

    def test_level1_impulse_response(self, filters):
        """Level-1 detail of an impulse is the highpass filter split into trees."""
        impulse = np.zeros(64)
        impulse[32] = 1.0
        detail = decompose_1d(impulse, 1).highpasses[0]
        expected = np.convolve(impulse, filters.h1o, mode="same")
        np.testing.assert_allclose(detail, expected[0::2] + 1j * expected[1::2], atol=1e-14)

    @pytest.mark.parametrize("level, omega", [(2, 1.18), (3, 0.59)])
    def test_detail_is_one_sided(self, level, omega):
        """Complex detail of a positive-frequency exponential dwarfs that of its mirror."""
        n = np.arange(256)
        real_part = decompose_1d(np.cos(omega * n), level).highpasses[level - 1]
        imag_part = decompose_1d(np.sin(omega * n), level).highpasses[level - 1]
        inner = slice(8, -8)
        positive = np.sum(np.abs(real_part + 1j * imag_part)[inner] ** 2)
        negative = np.sum(np.abs(real_part - 1j * imag_part)[inner] ** 2)
        assert min(positive, negative) < 1e-3 * max(positive, negative)

    def test_round_trip(self, rng):
        """1D sequences reconstruct across depths, including odd lengths."""
        for length, levels in ((64, 1), (64, 3), (96, 4), (37, 2)):
            x = rng.standard_normal(length)
            np.testing.assert_allclose(reconstruct_1d(decompose_1d(x, levels)), x, atol=1e-8)

    def test_constant_sequence(self):
        """Constant input has no level-1 detail and negligible coarser detail."""
        pyramid = decompose_1d(np.full(64, 1.0), 3)
        assert np.max(np.abs(pyramid.highpasses[0])) < 1e-12
        for detail in pyramid.highpasses[1:]:
            assert np.max(np.abs(detail)) < 1e-5


class TestInputValidation:
    """Test rejection of unusable input."""

    def test_too_small_for_depth(self):
        """An image smaller than 2**levels on a side is rejected."""
        with pytest.raises(TransformError):
            forward(np.zeros((8, 8)), 4)

    def test_non_positive_levels(self):
        with pytest.raises(TransformError):
            forward(np.zeros((16, 16)), 0)

    def test_non_finite(self):
        image = np.zeros((16, 16))
        image[3, 4] = np.nan
        with pytest.raises(TransformError):
            forward(image, 2)

    def test_missing_spatial_axis(self):
        with pytest.raises(TransformError):
            forward(np.zeros(16), 1)


if __name__ == "__main__":
    pytest.main([__file__])

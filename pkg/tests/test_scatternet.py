"""
Tests for the scattering network, log parameter search and normalization.
"""

import numpy as np
import pytest
from scipy import stats

from dtscat.config import Resolution, ScatterConfig
from dtscat.dtcwt import forward, lowpass_decimate
from dtscat.scatternet import (
    DEFAULT_K_GRID,
    EnvelopePlane,
    FeatureStats,
    ScatterError,
    extract_features,
    extract_many,
    feature_index,
    feature_length,
    log_transform,
    modulus,
    normalize_features,
    resolution_columns,
    scatter_layers,
    smooth_to_invariance,
    tune_log_param,
    tune_log_params,
    upsample,
)


def decimate_oracle(plane, taps):
    """Filter with np.convolve and keep every second sample, along both axes."""
    def along(v):
        full = np.convolve(v, taps)
        return full[taps.size // 2::2][:(v.size + 1) // 2]

    plane = np.apply_along_axis(along, 0, plane)
    return np.apply_along_axis(along, 1, plane)


class TestNonlinearities:
    """Test the modulus and the log transform."""

    def test_modulus_of_known_coefficient(self):
        """A 3+4i coefficient has envelope 5."""
        pyramid = forward(np.zeros((32, 32)), 2)
        pyramid.highpasses[0][2, 3, 4] = 3 + 4j
        envelopes = modulus(pyramid)
        assert len(envelopes) == 12
        plane = next(e for e in envelopes if e.scale == 1 and e.orientation == 4)
        assert plane.values[2, 3] == pytest.approx(5.0)

    def test_modulus_ignores_phase(self, rng):
        """Rotating every coefficient's phase leaves the envelopes unchanged."""
        pyramid = forward(rng.random((32, 32)), 3)
        before = [e.values for e in modulus(pyramid)]
        pyramid.highpasses = tuple(bands * np.exp(1j * 0.7) for bands in pyramid.highpasses)
        after = [e.values for e in modulus(pyramid)]
        for a, b in zip(before, after):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_log_transform_values(self):
        """log(U + k) on arrays and envelope planes."""
        assert log_transform(np.array([0.0]), 1.1)[0] == pytest.approx(0.0953101798)
        plane = EnvelopePlane(scale=1, orientation=0, values=np.array([[np.e - 1.0]]))
        assert log_transform(plane, 1.0)[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("k", [0.0, -1.0])
    def test_log_transform_rejects_non_positive_k(self, k):
        with pytest.raises(ScatterError):
            log_transform(np.ones(3), k)


class TestLogParameterSearch:
    """Test the mean-median symmetry rule."""

    def test_recovers_symmetrizing_k(self):
        """Samples that are symmetric after log(x + k*) select k*."""
        grid = np.asarray(DEFAULT_K_GRID)
        k_star = float(grid[12])
        centre = np.log(k_star) + 3.0
        offsets = np.array([-2.5, -1.5, -0.5, 0.0, 0.5, 1.5, 2.5])
        samples = np.exp(centre + offsets) - k_star

        k, report = tune_log_param(samples)
        assert k == pytest.approx(k_star)
        assert report.fits[0].gap < 1e-9
        assert report.log_params == [k]

    def test_single_sample_takes_smallest_k(self):
        """Every k ties on one sample; the smallest grid value wins."""
        k, report = tune_log_param([2.0], grid=[5.0, 0.5, 1.0])
        assert k == 0.5
        assert report.fits[0].skew_before == 0.0

    def test_log_reduces_skew_of_heavy_tail(self, rng):
        """Lognormal envelopes become more symmetric after the chosen log."""
        samples = rng.lognormal(mean=0.0, sigma=1.0, size=5000)
        k, report = tune_log_param(samples, scale=2)
        fit = report.fits[0]
        assert fit.scale == 2
        assert abs(fit.skew_after) < abs(fit.skew_before)
        assert fit.gap <= fit.gap_at_grid_min
        assert abs(stats.skew(np.log(samples + k))) == pytest.approx(abs(fit.skew_after))

    @pytest.mark.parametrize("samples", [[], [1.0, -0.5], [1.0, np.nan]])
    def test_rejects_unusable_samples(self, samples):
        with pytest.raises(ScatterError):
            tune_log_param(samples)

    def test_rejects_non_positive_grid(self):
        with pytest.raises(ScatterError):
            tune_log_param([1.0, 2.0], grid=[0.0, 1.0])

    def test_tune_over_images(self, rng, small_config):
        """Image-level tuning yields a fixed-mode config with one k per logged scale."""
        images = rng.random((4, 32, 32, 3))
        tuned, report = tune_log_params(images, small_config.with_overrides(log_mode="auto"))
        assert tuned.log_mode == "fixed"
        assert len(tuned.log_params) == 1
        assert [fit.scale for fit in report.fits] == [1]
        assert tuned.log_params[0] in DEFAULT_K_GRID


class TestSmoothing:
    """Test averaging to the invariance scale."""

    def test_constant_plane(self):
        """Each averaging step doubles a constant plane."""
        smoothed = smooth_to_invariance(np.full((32, 32), 0.5), 0, 3)
        assert smoothed.shape == (4, 4)
        np.testing.assert_allclose(smoothed, 0.5 * 2.0 ** 3, rtol=1e-10)

    def test_impulse_matches_convolution_cascade(self, filters):
        """An interior impulse smooths exactly like convolve-then-subsample."""
        plane = np.zeros((64, 64))
        plane[32, 32] = 1.0
        expected = decimate_oracle(decimate_oracle(plane, filters.h0a), filters.h0a)
        np.testing.assert_allclose(smooth_to_invariance(plane, 0, 2, filters), expected, atol=1e-14)

    def test_lowpass_decimate_odd_length(self, filters):
        """Odd lengths round the output size up."""
        assert lowpass_decimate(np.ones(7), filters.h0a).shape == (4,)

    def test_no_smoothing_at_target(self, rng):
        plane = rng.random((8, 8))
        np.testing.assert_array_equal(smooth_to_invariance(plane, 3, 3), plane)

    def test_refuses_finer_target(self):
        with pytest.raises(ScatterError):
            smooth_to_invariance(np.zeros((8, 8)), 3, 2)


class TestScatterLayers:
    """Test the layered network on single images."""

    def test_layer_shapes_and_paths(self, rng):
        """Five levels give five first-order scales and ten j2 > j1 paths."""
        config = ScatterConfig()
        layers = scatter_layers(rng.random((64, 64, 3)), config)
        assert layers.s0.shape == (2, 2, 3)
        assert sorted(layers.s1) == [1, 2, 3, 4, 5]
        assert all(plane.shape == (2, 2, 6, 3) for plane in layers.s1.values())
        assert len(layers.s2) == 10
        assert all(j2 > j1 for j1, j2 in layers.s2)
        assert all(plane.shape == (2, 2, 6, 6, 3) for plane in layers.s2.values())

    def test_first_order_only(self, rng, small_config):
        layers = scatter_layers(rng.random((32, 32)), small_config.with_overrides(max_order=1))
        assert layers.s2 == {}

    def test_coarsest_scale_stays_linear(self, rng, small_config):
        """Only scales below the coarsest one are logged."""
        image = rng.random((32, 32))
        layers = scatter_layers(image, small_config)
        pyramid = forward(image, 2)
        np.testing.assert_allclose(layers.envelopes[2], np.abs(pyramid.highpasses[1]), atol=1e-12)
        np.testing.assert_allclose(layers.envelopes[1], np.log(np.abs(pyramid.highpasses[0]) + 1.1), atol=1e-12)

        index = feature_index(small_config)
        first = index[index["layer"] == 1]
        assert np.all(first["logged"][first["j1"] == 1] == 1)
        assert np.all(first["logged"][first["j1"] == 2] == 0)

    def test_constant_image_without_log(self, small_config):
        """A constant image has negligible first and second order coefficients."""
        layers = scatter_layers(np.full((32, 32), 0.5), small_config.with_overrides(log_mode="off"))
        for plane in list(layers.s1.values()) + list(layers.s2.values()):
            assert np.max(np.abs(plane)) < 1e-4
        np.testing.assert_allclose(layers.s0, 0.5 * 2.0 ** 2, rtol=1e-9)

    def test_invariance_improves_with_scale(self, rng):
        """Coarser averaging makes features less sensitive to a one-pixel shift."""
        base = rng.random((32, 32))
        image = (base + np.roll(base, 1, 0) + np.roll(base, 1, 1) + np.roll(base, (1, 1), (0, 1))) / 4
        shifted = np.roll(image, 1, axis=1)
        changes = []
        for J in (2, 5):
            config = ScatterConfig(
                resolutions=(Resolution(side=32, levels=2, invariance_scale=J),), log_mode="off",
            )
            before = scatter_layers(image, config).flatten()
            after = scatter_layers(shifted, config).flatten()
            changes.append(np.linalg.norm(after - before) / np.linalg.norm(before))
        assert changes[1] < changes[0]


class TestFeatureVectors:
    """Test flattening, descriptors and extraction."""

    def test_default_vector_lengths(self):
        """Both default resolutions give their documented per-image lengths."""
        config = ScatterConfig()
        columns = resolution_columns(config)
        assert [c.size for c in columns] == [4692, 6507]
        assert feature_length(config) == 4692 + 6507

    def test_first_order_vector_lengths(self):
        config = ScatterConfig(max_order=1)
        assert [c.size for c in resolution_columns(config)] == [372, 675]

    def test_flatten_follows_descriptors(self, rng, small_config):
        """Every flattened value sits where its descriptor says."""
        image = rng.random((32, 32, 3))
        layers = scatter_layers(image, small_config)
        values = layers.flatten()
        index = feature_index(small_config)
        assert values.size == index.size == 3 * (64 + 2 * 6 * 64 + 36 * 64)

        for i in rng.integers(index.size, size=200):
            d = index[i]
            if d["layer"] == 0:
                expected = layers.s0[d["row"], d["col"], d["channel"]]
            elif d["layer"] == 1:
                expected = layers.s1[d["j1"]][d["row"], d["col"], d["r1"], d["channel"]]
            else:
                expected = layers.s2[(d["j1"], d["j2"])][d["row"], d["col"], d["r1"], d["r2"], d["channel"]]
            assert values[i] == expected

    def test_extraction_is_deterministic(self, rng, small_config):
        image = rng.random((32, 32, 3))
        first = extract_features(image, small_config)
        second = extract_features(image, small_config)
        np.testing.assert_array_equal(first.values, second.values)
        assert len(first) == feature_length(small_config)

    def test_grey_image_gives_equal_channels(self, rng, small_config):
        """Identical colour channels produce identical per-channel features."""
        grey = np.repeat(rng.random((32, 32, 1)), 3, axis=2)
        vector = extract_features(grey, small_config)
        channel = vector.index_map["channel"]
        np.testing.assert_allclose(vector.values[channel == 0], vector.values[channel == 1], atol=1e-12)
        np.testing.assert_allclose(vector.values[channel == 0], vector.values[channel == 2], atol=1e-12)

    def test_extract_many_matches_single(self, rng, small_config):
        images = rng.random((3, 32, 32, 3))
        matrix = extract_many(images, small_config)
        assert matrix.shape == (3, feature_length(small_config))
        assert matrix.dtype == np.float32
        np.testing.assert_allclose(matrix[1], extract_features(images[1], small_config).values, rtol=1e-6, atol=1e-6)

    def test_rejects_wrong_input(self, small_config):
        with pytest.raises(ScatterError):
            extract_features(np.zeros((32, 32)), small_config)
        with pytest.raises(ScatterError):
            extract_features(np.zeros((16, 16, 3)), small_config)
        with pytest.raises(ScatterError):
            scatter_layers(np.zeros((48, 48)), small_config)


class TestUpsample:
    """Test bicubic resizing."""

    def test_linear_ramp_is_preserved(self):
        """Cubic interpolation with linear edge extrapolation reproduces a ramp."""
        ramp = 0.2 + 0.6 * np.arange(32) / 31
        image = np.tile(ramp, (32, 1))
        resized = upsample(image, 64)
        u = (np.arange(64) + 0.5) / 2 - 0.5
        np.testing.assert_allclose(resized, np.tile(0.2 + 0.6 * u / 31, (64, 1)), atol=1e-12)

    def test_same_size_is_identity(self, rng):
        image = rng.random((32, 32, 3))
        np.testing.assert_allclose(upsample(image, 32), image, atol=1e-12)

    def test_output_is_clamped(self):
        image = np.zeros((32, 32))
        image[16, 16] = 1.0
        resized = upsample(image, 64)
        assert resized.min() >= 0.0 and resized.max() <= 1.0

    def test_refuses_downscale(self):
        with pytest.raises(ScatterError):
            upsample(np.zeros((32, 32)), 16)


class TestNormalization:
    """Test z-scoring with training statistics."""

    def test_zero_mean_unit_variance(self, rng):
        data = rng.normal(3.0, 2.0, size=(500, 6)).astype(np.float32)
        normalized, stats_ = normalize_features(data, chunk_rows=64)
        np.testing.assert_allclose(normalized.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(normalized.std(axis=0), 1.0, atol=1e-9)
        np.testing.assert_allclose(stats_.mean, data.astype(np.float64).mean(axis=0), rtol=1e-9)

    def test_constant_column_becomes_zero(self, rng):
        data = rng.random((10, 3))
        data[:, 1] = 4.0
        normalized, stats_ = normalize_features(data)
        assert np.all(normalized[:, 1] == 0.0)
        assert np.all(stats_.apply(np.full((2, 3), 9.0))[:, 1] == 0.0)

    def test_column_subset(self, rng):
        data = rng.random((20, 5))
        normalized, stats_ = normalize_features(data)
        columns = np.array([4, 1])
        np.testing.assert_allclose(stats_.apply(data[:, columns], columns=columns), normalized[:, columns])

    def test_width_mismatch(self):
        stats_ = FeatureStats(mean=np.zeros(3), std=np.ones(3))
        with pytest.raises(ScatterError):
            stats_.apply(np.zeros((2, 4)))

    def test_needs_two_rows(self):
        with pytest.raises(ScatterError):
            normalize_features(np.zeros((1, 4)))


if __name__ == "__main__":
    pytest.main([__file__])

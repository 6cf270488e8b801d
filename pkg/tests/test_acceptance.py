"""
End-to-end acceptance checks.

The shift-stability check runs on synthetic images; the rest need the real
CIFAR-10 data (set DTSCAT_DATA to run).
"""

import asyncio
import os

import numpy as np
import pytest

from dtscat.classify import accuracy, predict, train
from dtscat.cli.extract import extract_images
from dtscat.config import Resolution, ScatterConfig
from dtscat.data import load_cifar, stratified_subsample
from dtscat.featsel import apply_selection, select_all_classes
from dtscat.scatternet import normalize_features, scatter_layers, tune_log_params

CONFIGS = {
    "log": ScatterConfig(),
    "no-log": ScatterConfig(log_mode="off"),
}
SEEDS = (0, 1, 2)
PER_CLASS_COUNT = 108


def relative_distance(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(a))


class FeatureCache:
    """CIFAR features extracted once per (configuration, split, size, seed)."""

    def __init__(self, root):
        self.train_set, self.test_set = load_cifar(root)
        self.workers = os.cpu_count() or 1
        self._features = {}

    def split(self, split, size=None, seed=0):
        dataset = self.train_set if split == "train" else self.test_set
        return dataset if size is None else stratified_subsample(dataset, size, seed)

    def features(self, name, split, size=None, seed=0):
        key = (name, split, size, None if size is None else seed)
        if key not in self._features:
            images = self.split(split, size, seed).images
            self._features[key], _ = asyncio.run(extract_images(images, CONFIGS[name], workers=self.workers))
        return self._features[key]


@pytest.fixture(scope="module")
def feature_cache(cifar_root):
    return FeatureCache(cifar_root)


def run_pipeline(cache, name, train_size, test_size=None, count=PER_CLASS_COUNT, seed=0):
    """Test accuracy of selection plus SVM trained on a stratified train subset."""
    train_set = cache.split("train", train_size, seed)
    test_set = cache.split("test", test_size, seed)
    train_features = cache.features(name, "train", train_size, seed)
    test_features = cache.features(name, "test", test_size, seed)

    normalized, stats = normalize_features(train_features)
    selection = select_all_classes(normalized, train_set.labels, count)
    model = train(apply_selection(normalized, selection), train_set.labels, c=14.0, gamma=2e-5)
    columns = selection.union
    predicted, _ = predict(model, stats.apply(test_features[:, columns], columns=columns))
    return accuracy(predicted, test_set.labels)


@pytest.mark.slow
class TestShiftStability:
    """Smoothed scattering moves less under small shifts than the raw envelopes."""

    def test_scattering_is_more_stable_than_envelopes(self, rng):
        config = ScatterConfig(log_mode="off", resolutions=(Resolution(side=64, levels=5),))
        ratios = []
        for i in range(20):
            image = rng.random((64, 64))
            shifted = np.roll(image, 1 + i % 4, axis=i % 2)
            original, moved = scatter_layers(image, config), scatter_layers(shifted, config)
            envelopes = np.concatenate([original.envelopes[j].ravel() for j in sorted(original.envelopes)])
            moved_envelopes = np.concatenate([moved.envelopes[j].ravel() for j in sorted(moved.envelopes)])
            scattering = relative_distance(original.flatten(), moved.flatten())
            ratios.append(scattering / relative_distance(envelopes, moved_envelopes))
        assert max(ratios) < 1.0
        assert np.mean(ratios) < 0.5


@pytest.mark.cifar
@pytest.mark.slow
class TestLogParameterTuning:
    """The tuned k symmetrizes scale-1 envelopes of real images."""

    def test_tuned_k_symmetrizes_scale_one(self, feature_cache):
        images = feature_cache.train_set.images[:1000]
        config = ScatterConfig(resolutions=(Resolution(side=64, levels=2),))
        _, report = tune_log_params(images, config)
        fit = next(f for f in report.fits if f.scale == 1)
        assert fit.gap <= 0.5 * fit.gap_at_grid_min
        assert abs(fit.skew_after) < abs(fit.skew_before)


@pytest.mark.cifar
@pytest.mark.slow
class TestCifarAccuracy:
    """Small-sample accuracy on the full test set."""

    def test_default_configuration(self, feature_cache):
        acc = run_pipeline(feature_cache, "log", train_size=300, test_size=500)
        assert acc > 0.2

    def test_log_off_still_learns(self, feature_cache):
        acc = run_pipeline(feature_cache, "no-log", train_size=300, test_size=500)
        assert acc > 0.15

    def test_log_helps_in_most_seeds(self, feature_cache):
        """With 1000 training images the log is at least as accurate in 2 of 3 seeds."""
        wins = sum(
            run_pipeline(feature_cache, "log", 1000, seed=seed) >= run_pipeline(feature_cache, "no-log", 1000, seed=seed)
            for seed in SEEDS
        )
        assert wins >= 2

    def test_more_training_images_help(self, feature_cache):
        """1000 training images beat 300 in 2 of 3 seeds."""
        wins = sum(
            run_pipeline(feature_cache, "log", 1000, seed=seed) > run_pipeline(feature_cache, "log", 300, seed=seed)
            for seed in SEEDS
        )
        assert wins >= 2

    def test_seeds_give_different_subsets(self, feature_cache):
        a = feature_cache.split("train", 100, seed=0)
        b = feature_cache.split("train", 100, seed=1)
        assert not np.array_equal(a.images, b.images)


if __name__ == "__main__":
    pytest.main([__file__])

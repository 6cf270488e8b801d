"""
Pytest configuration and shared fixtures for dtscat tests.
"""

import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

from dtscat.config import DATA_ENV_VAR, Resolution, ScatterConfig
from dtscat.dtcwt import load_default_filters


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as temp_path:
        yield Path(temp_path)


@pytest.fixture
def rng():
    """Seeded generator shared by numerical tests."""
    return np.random.default_rng(20240611)


@pytest.fixture
def filters():
    """Default filter set."""
    return load_default_filters()


@pytest.fixture
def small_config():
    """Single 32x32 resolution with 2 levels; keeps extraction fast."""
    return ScatterConfig(resolutions=(Resolution(side=32, levels=2),))


def write_cifar_batch(path, images, labels, variant=10, coarse=None):
    """Write uint8 images ``(N, 32, 32, 3)`` in the CIFAR binary record layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    planes = np.moveaxis(images, -1, 1).reshape(images.shape[0], -1)
    if variant == 10:
        records = np.column_stack([labels, planes])
    else:
        coarse = np.zeros_like(labels) if coarse is None else np.asarray(coarse, dtype=np.uint8)
        records = np.column_stack([coarse, labels, planes])
    Path(path).write_bytes(records.astype(np.uint8).tobytes())
    return Path(path)


def class_images(labels, rng, class_count=10):
    """Synthetic images whose colour and stripe direction depend on the class."""
    yy, xx = np.mgrid[0:32, 0:32]
    images = np.empty((len(labels), 32, 32, 3), dtype=np.uint8)
    for i, label in enumerate(labels):
        angle = np.pi * label / class_count
        stripes = 0.5 + 0.4 * np.cos(0.6 * (np.cos(angle) * xx + np.sin(angle) * yy))
        tint = np.array([(label % 3) / 2.0, ((label // 3) % 3) / 2.0, 0.5])
        image = 0.6 * stripes[..., None] + 0.3 * tint + 0.1 * rng.random((32, 32, 3))
        images[i] = np.clip(image * 255, 0, 255).astype(np.uint8)
    return images


@pytest.fixture
def cifar_writer():
    """Writer for single CIFAR batch files."""
    return write_cifar_batch


@pytest.fixture
def create_cifar_dir(temp_dir, rng):
    """Factory writing a miniature CIFAR-10/100 binary directory."""
    def _create(per_class_train=2, per_class_test=1, variant=10, class_count=None):
        class_count = class_count or (10 if variant == 10 else 100)
        root = temp_dir / f"cifar{variant}"
        root.mkdir(exist_ok=True)
        if variant == 10:
            for b in range(1, 6):
                labels = np.repeat(np.arange(class_count), per_class_train)
                write_cifar_batch(root / f"data_batch_{b}.bin", class_images(labels, rng), labels)
            labels = np.repeat(np.arange(class_count), per_class_test)
            write_cifar_batch(root / "test_batch.bin", class_images(labels, rng), labels)
        else:
            labels = np.repeat(np.arange(class_count), per_class_train)
            write_cifar_batch(root / "train.bin", class_images(labels, rng, class_count), labels, variant=100)
            labels = np.repeat(np.arange(class_count), per_class_test)
            write_cifar_batch(root / "test.bin", class_images(labels, rng, class_count), labels, variant=100)
        return root

    return _create


@pytest.fixture(scope="session")
def cifar_root():
    """Real CIFAR-10 directory from the environment, or skip."""
    root = os.environ.get(DATA_ENV_VAR)
    if not root or not Path(root).is_dir():
        pytest.skip(f"{DATA_ENV_VAR} does not point at a CIFAR-10 directory")
    return Path(root)


# Test markers
def pytest_configure(config):
    """Configure custom pytest markers."""
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
    config.addinivalue_line(
        "markers", "cifar: mark test as requiring the real CIFAR-10 dataset"
    )

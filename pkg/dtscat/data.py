"""
CIFAR binary batch ingestion and seeded stratified subsampling.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

IMAGE_SIDE = 32
PIXEL_BYTES = 3 * IMAGE_SIDE * IMAGE_SIDE

CIFAR10_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST = ["test_batch.bin"]
CIFAR10_SUBDIR = "cifar-10-batches-bin"
CIFAR100_TRAIN = ["train.bin"]
CIFAR100_TEST = ["test.bin"]
CIFAR100_SUBDIR = "cifar-100-binary"
COARSE_CLASSES = 20


@dataclass(frozen=True)
class LabeledImageSet:
    """Images ``(N, 32, 32, 3)`` in [0, 1] with their class ids."""
    images: np.ndarray
    labels: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise DatasetError(f"Images must be (N, h, w, 3), got shape {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise DatasetError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError(f"Labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.labels.size)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices: np.ndarray) -> "LabeledImageSet":
        return LabeledImageSet(self.images[indices], self.labels[indices], self.class_count, self.split)


def read_cifar_batch(path: Union[str, Path], variant: Literal[10, 100] = 10) -> Tuple[np.ndarray, np.ndarray]:
    """Parse one binary batch file into uint8 images ``(N, 32, 32, 3)`` and labels.

    CIFAR-10 records are 1 label byte + 3072 pixel bytes; CIFAR-100 records
    carry a coarse label byte before the fine label; both are range-checked
    and the fine label is returned.
    """
    path = Path(path)
    label_bytes = 1 if variant == 10 else 2
    record = label_bytes + PIXEL_BYTES
    class_count = 10 if variant == 10 else 100
    try:
        raw = np.fromfile(path, dtype=np.uint8)
    except OSError as e:
        logger.error(f"Failed to read batch {path}: {e}")
        raise DatasetError(f"Cannot read CIFAR batch {path}: {e}")

    count, remainder = divmod(raw.size, record)
    if remainder:
        raise DatasetError(
            f"{path}: truncated batch of {raw.size} bytes; expected a multiple of the {record}-byte "
            f"record ({count + 1} records would need {(count + 1) * record} bytes, record {count} "
            f"starts at offset {count * record})"
        )
    records = raw.reshape(count, record)
    labels = records[:, label_bytes - 1].astype(np.int64)
    bad = np.flatnonzero(labels >= class_count)
    if bad.size:
        offset = int(bad[0]) * record + label_bytes - 1
        raise DatasetError(f"{path}: label {labels[bad[0]]} out of range [0, {class_count}) at byte offset {offset}")
    if variant == 100:
        coarse = records[:, 0]
        bad = np.flatnonzero(coarse >= COARSE_CLASSES)
        if bad.size:
            offset = int(bad[0]) * record
            raise DatasetError(
                f"{path}: coarse label {coarse[bad[0]]} out of range [0, {COARSE_CLASSES}) at byte offset {offset}"
            )

    planes = records[:, label_bytes:].reshape(count, 3, IMAGE_SIDE, IMAGE_SIDE)
    return np.moveaxis(planes, 1, -1), labels


def _resolve_dir(root: Path, names: Sequence[str], subdir: str) -> Path:
    for candidate in (root, root / subdir):
        if all((candidate / name).is_file() for name in names):
            return candidate
    missing = [name for name in names if not (root / name).is_file()]
    raise DatasetError(f"Missing CIFAR batch files under {root} (or {root / subdir}): {', '.join(missing)}")


def _load_split(directory: Path, names: Sequence[str], variant: int, split: str) -> LabeledImageSet:
    images: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for name in names:
        batch_images, batch_labels = read_cifar_batch(directory / name, variant)
        images.append(batch_images)
        labels.append(batch_labels)
        logger.info(f"Read {batch_labels.size} records from {directory / name}")
    pixels = np.concatenate(images).astype(np.float32) / np.float32(255.0)
    return LabeledImageSet(pixels, np.concatenate(labels), 10 if variant == 10 else 100, split)


def load_cifar(root: Union[str, Path], variant: Literal[10, 100] = 10) -> Tuple[LabeledImageSet, LabeledImageSet]:
    """Load the train and test splits of CIFAR-10 or CIFAR-100 binary batches."""
    if variant not in (10, 100):
        raise DatasetError(f"CIFAR variant must be 10 or 100, got {variant}")
    root = Path(root)
    if variant == 10:
        train_names, test_names, subdir = CIFAR10_TRAIN, CIFAR10_TEST, CIFAR10_SUBDIR
    else:
        train_names, test_names, subdir = CIFAR100_TRAIN, CIFAR100_TEST, CIFAR100_SUBDIR
    directory = _resolve_dir(root, train_names + test_names, subdir)
    train = _load_split(directory, train_names, variant, "train")
    test = _load_split(directory, test_names, variant, "test")
    logger.info(f"Loaded CIFAR-{variant}: {len(train)} train, {len(test)} test images")
    return train, test


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; streams are identical across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def stratified_indices(labels: np.ndarray, class_count: int, total: int, seed: int) -> np.ndarray:
    """Draw ``total / class_count`` row indices per class without replacement.

    Indices are grouped by class ascending and sorted within each class.
    """
    labels = np.asarray(labels)
    if total < 0 or total % class_count:
        raise DatasetError(f"Sample size {total} is not divisible by {class_count} classes")
    per_class = total // class_count
    available = np.bincount(labels, minlength=class_count)
    short = np.flatnonzero(available < per_class)
    if short.size:
        raise DatasetError(
            f"Class {short[0]} has only {available[short[0]]} rows; {per_class} per class requested"
        )
    rng = make_generator(seed)
    chosen = []
    for cls in range(class_count):
        rows = np.flatnonzero(labels == cls)
        chosen.append(np.sort(rng.choice(rows, size=per_class, replace=False)))
    return np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)


def stratified_subsample(dataset: LabeledImageSet, total: int, seed: int) -> LabeledImageSet:
    """Equal-per-class random subset of ``dataset``, deterministic per seed."""
    return dataset.subset(stratified_indices(dataset.labels, dataset.class_count, total, seed))


def select_rows(labels: np.ndarray, class_count: int, total: Optional[int], seed: int) -> np.ndarray:
    """All rows when ``total`` is None or the full size, else a stratified draw."""
    if total is None or total == labels.size:
        return np.arange(labels.size)
    return stratified_indices(labels, class_count, total, seed)


class DatasetError(DataError):
    """Exception raised for missing, truncated or inconsistent dataset files."""
    pass

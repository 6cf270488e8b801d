"""
Feature extraction over a CIFAR dataset.
"""

import asyncio
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from ..config import ScatterConfig, config_hash
from ..data import LabeledImageSet, load_cifar, select_rows
from ..dtcwt import forward
from ..scatternet import extract_many, feature_index, tune_log_params, upsample
from ..store import write_feature_store, write_pyramid_dump
from . import write_manifest

logger = logging.getLogger(__name__)

CHUNK_ROWS = 64


def _extract_chunk(images: np.ndarray, config: ScatterConfig) -> Tuple[np.ndarray, float]:
    start = time.perf_counter()
    matrix = extract_many(images, config)
    return matrix, time.perf_counter() - start


def _make_executor(workers: int) -> Executor:
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else ThreadPoolExecutor(max_workers=1)


async def extract_images(
    images: np.ndarray,
    config: ScatterConfig,
    workers: int = 1,
    chunk_rows: int = CHUNK_ROWS,
) -> Tuple[np.ndarray, float]:
    """Feature matrix of ``images`` plus mean extraction seconds per image.

    Chunks run on a bounded pool; results are gathered in submission order
    so the matrix does not depend on scheduling.
    """
    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(max(1, workers))
    chunks = [images[i:i + chunk_rows] for i in range(0, images.shape[0], chunk_rows)]
    done = 0

    with _make_executor(workers) as pool:
        async def run(chunk: np.ndarray) -> Tuple[np.ndarray, float]:
            nonlocal done
            async with semaphore:
                result = await loop.run_in_executor(pool, _extract_chunk, chunk, config)
            done += chunk.shape[0]
            logger.info(f"Extracted {done}/{images.shape[0]} images")
            return result

        results = await asyncio.gather(*(run(chunk) for chunk in chunks))

    if not results:
        return np.empty((0, feature_index(config).size), dtype=np.float32), 0.0
    matrix = np.concatenate([r[0] for r in results])
    seconds = sum(r[1] for r in results) / max(1, images.shape[0])
    return matrix, seconds


def resolve_log_config(
    config: ScatterConfig,
    train: LabeledImageSet,
    sample_count: int,
    seed: int,
) -> ScatterConfig:
    """Replace ``log_mode: auto`` with parameters tuned on a training sample."""
    if config.log_mode != "auto":
        return config
    per_class = max(1, min(sample_count, len(train)) // train.class_count)
    rows = select_rows(train.labels, train.class_count, per_class * train.class_count, seed)
    tuned, report = tune_log_params(train.images[rows], config)
    click.echo(f"🔍 Tuned log parameters on {rows.size} images: {', '.join(f'{k:.3g}' for k in report.log_params)}")
    return tuned


async def run_extract(
    data_root: str,
    out_dir: str,
    config: ScatterConfig,
    variant: int = 10,
    train_size: Optional[int] = None,
    test_size: Optional[int] = None,
    seed: int = 0,
    workers: int = 1,
    tune_samples: int = 1000,
    dump_pyramid: Optional[str] = None,
) -> Dict[str, Path]:
    """Extract train and test feature stores into ``out_dir``."""
    out = Path(out_dir)
    click.echo(f"🔍 Loading CIFAR-{variant} from {data_root}...")
    train, test = load_cifar(data_root, variant)
    train = train.subset(select_rows(train.labels, train.class_count, train_size, seed))
    test = test.subset(select_rows(test.labels, test.class_count, test_size, seed))
    click.echo(f"📋 {len(train)} train and {len(test)} test images")

    config = resolve_log_config(config, train, tune_samples, seed)
    digest = config_hash(config)
    index = feature_index(config)
    sidecar = {"config": config.model_dump(mode="json"), "config_hash": digest, "variant": variant}

    artifacts: Dict[str, Path] = {}
    timings: Dict[str, float] = {}
    for split in (train, test):
        click.echo(f"  📄 Extracting {split.split} features ({index.size} dimensions)...")
        start = time.perf_counter()
        matrix, per_image = await extract_images(split.images, config, workers)
        timings[f"{split.split}_wall_s"] = time.perf_counter() - start
        timings[f"{split.split}_per_image_s"] = per_image
        path = out / f"{split.split}.sctr"
        write_feature_store(
            path, matrix, split.labels, index, digest, logged=config.log_mode == "fixed",
            sidecar=dict(sidecar, split=split.split, rows=len(split)),
        )
        artifacts[split.split] = path
        click.echo(f"  ✅ {path} ({len(split)} x {index.size}), {per_image * 1e3:.1f} ms per image")

    if dump_pyramid:
        resolution = config.resolutions[0]
        pyramid = forward(upsample(train.images[0], resolution.side), resolution.levels)
        artifacts["pyramid"] = write_pyramid_dump(dump_pyramid, pyramid, digest)
        click.echo(f"  📄 Pyramid of the first training image written to {dump_pyramid}")

    artifacts["manifest"] = write_manifest(
        "extract",
        out / "extract.manifest.yaml",
        config=config,
        parameters={
            "variant": variant, "train_size": train_size, "test_size": test_size,
            "workers": workers, "tune_samples": tune_samples, "dump_pyramid": dump_pyramid,
        },
        seeds=[seed],
        dataset=str(data_root),
        timings=timings,
        artifacts=list(artifacts.values()),
    )
    return artifacts

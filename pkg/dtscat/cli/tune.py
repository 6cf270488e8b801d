"""
Log-parameter tuning by the mean-median rule.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence

import click
import yaml

from ..config import ScatterConfig
from ..data import load_cifar, select_rows
from ..scatternet import LogParamReport, tune_log_params
from ..store import atomic_write
from . import write_manifest

logger = logging.getLogger(__name__)


def run_tune_log(
    data_root: str,
    output: str,
    config: ScatterConfig,
    variant: int = 10,
    samples: int = 1000,
    seed: int = 0,
    grid: Optional[Sequence[float]] = None,
) -> LogParamReport:
    """Tune k per scale on a stratified training sample and write a config fragment.

    The fragment (``log_mode`` and ``log_params``) can be passed to
    ``extract --config``; the full report goes to ``<output>.report.yaml``.
    """
    click.echo(f"🔍 Loading CIFAR-{variant} from {data_root}...")
    train, _ = load_cifar(data_root, variant)
    per_class = max(1, min(samples, len(train)) // train.class_count)
    rows = select_rows(train.labels, train.class_count, per_class * train.class_count, seed)
    click.echo(f"📋 Pooling envelopes of {rows.size} training images")

    tuned, report = tune_log_params(train.images[rows], config, grid=grid)

    output_path = Path(output)
    fragment = {"log_mode": "fixed", "log_params": [float(k) for k in tuned.log_params]}
    with atomic_write(output_path, "w") as f:
        f.write(yaml.safe_dump(fragment, sort_keys=False))
    report_path = output_path.with_name(output_path.name + ".report.yaml")
    with atomic_write(report_path, "w") as f:
        f.write(yaml.safe_dump(report.model_dump(mode="json"), sort_keys=False))

    for fit in report.fits:
        click.echo(
            f"  ✅ scale {fit.scale}: k={fit.k:.4g}  |mean-median| {fit.gap_at_grid_min:.4g} -> {fit.gap:.4g}"
            f"  skew {fit.skew_before:.3f} -> {fit.skew_after:.3f}"
        )
    write_manifest(
        "tune-log",
        output_path.with_name(output_path.name + ".manifest.yaml"),
        config=tuned,
        parameters={"variant": variant, "samples": int(rows.size), "grid": list(grid) if grid else None},
        seeds=[seed],
        dataset=str(data_root),
        artifacts=[output_path, report_path],
    )
    return report

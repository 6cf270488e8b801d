"""
Scattering-time benchmark command.
"""

import logging
from pathlib import Path

import click

from ..bench import BenchReport, run_bench
from ..config import ScatterConfig
from ..report import write_table
from . import write_manifest

logger = logging.getLogger(__name__)


def run_bench_command(config: ScatterConfig, output: str, iterations: int, seed: int, fft: bool) -> BenchReport:
    click.echo(f"🔍 Timing {iterations} iteration(s) on {config.resolutions[0].label}...")
    report = run_bench(config, iterations=iterations, seed=seed, fft=fft)

    for stats in report.stages:
        click.echo(f"  {stats.name:<10} {stats.mean * 1e3:9.3f} ms ± {stats.std * 1e3:.3f}")
    for stats in report.per_image:
        click.echo(f"  📄 per image {stats.name}: {stats.mean * 1e3:.2f} ms")
    if report.fft_reference is not None and report.spatial_forward is not None:
        faster = report.spatial_forward.mean < report.fft_reference.mean
        click.echo(
            f"  spatial forward {report.spatial_forward.mean * 1e3:.2f} ms vs FFT per band "
            f"{report.fft_reference.mean * 1e3:.2f} ms ({'spatial' if faster else 'FFT'} faster)"
        )

    csv_path, md_path = write_table(report.rows(), output)
    click.echo(f"✅ Timings written to {csv_path} and {md_path}")
    write_manifest(
        "bench",
        Path(output).with_name(Path(output).name + ".manifest.yaml"),
        config=config,
        parameters={"iterations": iterations, "fft": fft},
        seeds=[seed],
        timings={f"{s.name}_mean_s": s.mean for s in report.stages + report.per_image},
        artifacts=[csv_path, md_path],
    )
    return report

"""
Main CLI entry point for dtscat.
"""

import asyncio
import functools
import logging
import sys
from typing import Optional, Tuple

import click

from .. import __version__
from ..config import DATA_ENV_VAR, Resolution, ScatterConfig, load_config
from ..errors import DtscatError
from . import parse_float_list, parse_int_list
from .bench import run_bench_command
from .extract import run_extract
from .select import run_select
from .train import run_eval, run_train
from .tune import run_tune_log

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def handle_errors(func):
    """Report dtscat errors as one line and exit with their code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except DtscatError as e:
            click.echo(f"❌ {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


def build_config(
    config_files: Tuple[str, ...],
    resolutions: Tuple[str, ...] = (),
    log: Optional[str] = None,
    k: Tuple[float, ...] = (),
    max_order: Optional[int] = None,
) -> ScatterConfig:
    config = load_config(config_files)
    log_mode = {"on": "fixed", "off": "off", "auto": "auto"}.get(log) if log else None
    return config.with_overrides(
        resolutions=tuple(Resolution.parse(r).model_dump() for r in resolutions) or None,
        log_mode=log_mode,
        log_params=tuple(k) or None,
        max_order=max_order,
    )


config_option = click.option(
    "--config", "config_files", multiple=True, type=click.Path(exists=True, dir_okay=False),
    help="YAML config or run manifest (repeatable; later files win)",
)
data_option = click.option(
    "--data", "data_root", envvar=DATA_ENV_VAR, required=True, type=click.Path(exists=True, file_okay=False),
    help=f"CIFAR binary directory (default: ${DATA_ENV_VAR})",
)
variant_option = click.option("--variant", type=click.Choice(["10", "100"]), default="10", help="CIFAR-10 or CIFAR-100")


@click.group()
@click.version_option(version=__version__, prog_name="dtscat")
@click.option("--verbose", "-v", count=True, help="Log progress (-v) or debug detail (-vv)")
def cli(verbose: int):
    """dtscat - DTCWT scattering features, OLS selection and Gaussian SVM.

    Extract features from CIFAR images, select discriminative dimensions,
    train and evaluate classifiers, and benchmark the scattering transform.
    """
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)],
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@cli.command()
@data_option
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory for stores")
@config_option
@click.option("--resolutions", multiple=True, help="side:levels[:J], e.g. 64:5 (repeatable)")
@click.option("--log", type=click.Choice(["on", "off", "auto"]), help="Log transform of first-layer envelopes")
@click.option("--k", multiple=True, type=float, help="Log parameter per scale, finest first (repeatable)")
@click.option("--max-order", type=click.IntRange(1, 2), help="Highest scattering order")
@variant_option
@click.option("--train-size", type=int, help="Stratified training subset size")
@click.option("--test-size", type=int, help="Stratified test subset size")
@click.option("--seed", default=0, show_default=True, help="Subsampling seed")
@click.option("--workers", default=1, show_default=True, help="Parallel extraction processes")
@click.option("--tune-samples", default=1000, show_default=True, help="Images used when --log auto")
@click.option("--dump-pyramid", type=click.Path(dir_okay=False), help="Also store the first image's pyramid here")
@handle_errors
def extract(data_root, out_dir, config_files, resolutions, log, k, max_order, variant, train_size, test_size,
            seed, workers, tune_samples, dump_pyramid):
    """Extract scattering feature stores for the train and test splits."""
    config = build_config(config_files, resolutions, log, k, max_order)
    asyncio.run(run_extract(
        data_root, out_dir, config, int(variant), train_size, test_size, seed, workers, tune_samples, dump_pyramid,
    ))


@cli.command("tune-log")
@data_option
@click.option("--out", "output", required=True, type=click.Path(dir_okay=False), help="Config fragment to write")
@config_option
@variant_option
@click.option("--samples", default=1000, show_default=True, help="Training images to pool")
@click.option("--seed", default=0, show_default=True, help="Sampling seed")
@click.option("--grid", help="Comma-separated candidate k values (default: 25 geometric steps 0.1..20)")
@handle_errors
def tune_log(data_root, output, config_files, variant, samples, seed, grid):
    """Choose log parameters by the mean-median symmetry rule."""
    config = build_config(config_files)
    run_tune_log(data_root, output, config, int(variant), samples, seed, parse_float_list(grid) or None)


@cli.command()
@click.argument("train_store", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output", required=True, type=click.Path(dir_okay=False), help="Selection file to write")
@click.option("--count", "counts", multiple=True, type=click.IntRange(min=0), default=(108,), show_default=True,
              help="Columns per class; repeat once per resolution for per-resolution selection")
@click.option("--workers", type=int, help="Concurrent class selections")
@handle_errors
def select(train_store, output, counts, workers):
    """Select class-discriminative dimensions by orthogonal least squares."""
    run_select(train_store, output, counts, workers)


@cli.command()
@click.argument("train_store", type=click.Path(exists=True, dir_okay=False))
@click.option("--selection", "selection_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output", required=True, type=click.Path(dir_okay=False), help="Model file to write")
@click.option("--c", default=14.0, show_default=True, help="Regularization parameter")
@click.option("--gamma", default=2e-5, show_default=True, help="RBF kernel width")
@click.option("--tol", default=1e-3, show_default=True, help="KKT violation tolerance")
@click.option("--cv", "cv_folds", type=click.IntRange(min=2), help="Cross-validate over the grids with this many folds")
@click.option("--c-grid", help="Comma-separated c values for --cv")
@click.option("--gamma-grid", help="Comma-separated gamma values for --cv")
@click.option("--train-size", type=int, help="Stratified training subset size")
@click.option("--seed", default=0, show_default=True)
@click.option("--max-kernel-evals", default=10 ** 7, show_default=True, help="Kernel evaluation cap per class")
@click.option("--workers", type=int, help="Concurrent binary problems")
@handle_errors
def train(train_store, selection_path, output, c, gamma, tol, cv_folds, c_grid, gamma_grid, train_size, seed,
          max_kernel_evals, workers):
    """Train a one-versus-all Gaussian SVM on selected features."""
    run_train(
        train_store, selection_path, output, c, gamma, tol, cv_folds,
        parse_float_list(c_grid), parse_float_list(gamma_grid), train_size, seed, max_kernel_evals, workers,
    )


@cli.command("eval")
@click.option("--out", "output", required=True, type=click.Path(dir_okay=False), help="Table stem (.csv and .md)")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--selection", "selection_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--test", "test_store", type=click.Path(exists=True, dir_okay=False))
@click.option("--pair", "pairs", multiple=True, help="TRAIN_STORE:TEST_STORE to train and test from scratch")
@click.option("--sweep", help="Comma-separated training sizes, e.g. 300,500,1000")
@click.option("--seeds", default="0", show_default=True, help="Comma-separated subsampling seeds")
@click.option("--count", default=108, show_default=True, help="Columns per class for --pair runs")
@click.option("--c", default=14.0, show_default=True)
@click.option("--gamma", default=2e-5, show_default=True)
@click.option("--tol", default=1e-3, show_default=True)
@click.option("--workers", type=int)
@handle_errors
def evaluate(output, model_path, selection_path, test_store, pairs, sweep, seeds, count, c, gamma, tol, workers):
    """Report test accuracy of a model, or of train:test pairs over training sizes."""
    run_eval(
        output, model_path, selection_path, test_store, pairs, parse_int_list(sweep),
        parse_int_list(seeds) or [0], count, c, gamma, tol, workers,
    )


@cli.command()
@click.option("--out", "output", required=True, type=click.Path(dir_okay=False), help="Table stem (.csv and .md)")
@config_option
@click.option("--resolutions", multiple=True, help="side:levels[:J] (repeatable)")
@click.option("--log", type=click.Choice(["on", "off"]))
@click.option("--iterations", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True)
@click.option("--fft", is_flag=True, help="Also time the FFT-per-band reference transform")
@handle_errors
def bench(output, config_files, resolutions, log, iterations, seed, fft):
    """Time each scattering stage and the per-image extraction."""
    config = build_config(config_files, resolutions, log)
    run_bench_command(config, output, iterations, seed, fft)


if __name__ == "__main__":
    cli()

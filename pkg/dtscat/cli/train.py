"""
SVM training and evaluation commands.
"""

import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from ..classify import SvmError, SvmModel, accuracy, cross_validate, predict, train
from ..data import select_rows
from ..errors import UsageError
from ..featsel import OlsSelection, apply_selection, select_all_classes
from ..report import write_table
from ..scatternet import FeatureStats, normalize_features
from ..store import (
    FeatureStore,
    load_stats,
    read_feature_store,
    read_model,
    read_selection,
    stats_path,
    write_model,
)
from . import write_manifest
from .select import store_config

logger = logging.getLogger(__name__)


def _selected(store: FeatureStore, selection: OlsSelection, stats: FeatureStats, rows=None) -> np.ndarray:
    if store.vector_length != selection.vector_length:
        raise UsageError(
            f"Store vector length {store.vector_length} does not match selection ({selection.vector_length})"
        )
    features = store.features if rows is None else store.features[rows]
    columns = selection.union
    return stats.apply(np.asarray(features)[:, columns], columns=columns)


def _load_selection(path: str) -> Tuple[OlsSelection, FeatureStats]:
    selection = read_selection(path)
    if selection.union.size == 0:
        raise SvmError(f"Selection {path} is empty; nothing to train on")
    return selection, load_stats(stats_path(path))


def run_train(
    train_store: str,
    selection_path: str,
    output: str,
    c: float,
    gamma: float,
    tol: float = 1e-3,
    cv_folds: Optional[int] = None,
    c_grid: Sequence[float] = (),
    gamma_grid: Sequence[float] = (),
    train_size: Optional[int] = None,
    seed: int = 0,
    max_kernel_evals: int = 10 ** 7,
    workers: Optional[int] = None,
) -> SvmModel:
    """Train a one-versus-all model on the selected, normalized training columns."""
    store = read_feature_store(train_store)
    selection, stats = _load_selection(selection_path)
    class_count = int(store.labels.max()) + 1
    rows = select_rows(store.labels, class_count, train_size, seed)
    X = _selected(store, selection, stats, rows)
    y = store.labels[rows]
    output_path = Path(output)
    timings: Dict[str, float] = {}
    artifacts: List[Path] = []
    options = {"tol": tol, "max_kernel_evals": max_kernel_evals, "workers": workers}

    if cv_folds:
        click.echo(f"🔍 {cv_folds}-fold cross-validation over {len(c_grid or [c])} x {len(gamma_grid or [gamma])} cells...")
        start = time.perf_counter()
        result = cross_validate(X, y, c_grid or [c], gamma_grid or [gamma], folds=cv_folds, seed=seed, **options)
        timings["cv_s"] = time.perf_counter() - start
        c, gamma = result.best_c, result.best_gamma
        artifacts.extend(write_table(result.cells(), output_path.with_name(output_path.name + ".cv")))
        click.echo(f"  ✅ best c={c:g}, gamma={gamma:g} (accuracy {result.best_accuracy:.4f})")

    click.echo(f"📋 Training on {X.shape[0]} rows x {X.shape[1]} columns (c={c:g}, gamma={gamma:g})...")
    start = time.perf_counter()
    model = train(X, y, c=c, gamma=gamma, **options)
    timings["train_s"] = time.perf_counter() - start
    write_model(output_path, model)
    artifacts.insert(0, output_path)
    if not model.converged:
        click.echo("  ⚠️  Some binary problems hit the iteration cap before converging")
    click.echo(f"✅ Model written to {output_path}")

    write_manifest(
        "train",
        output_path.with_name(output_path.name + ".manifest.yaml"),
        config=store_config(Path(train_store)),
        parameters={
            "train_store": str(train_store), "selection": str(selection_path), "c": c, "gamma": gamma,
            "tol": tol, "cv_folds": cv_folds, "c_grid": list(c_grid), "gamma_grid": list(gamma_grid),
            "train_size": train_size, "max_kernel_evals": max_kernel_evals,
        },
        seeds=[seed],
        timings=timings,
        artifacts=artifacts,
    )
    return model


def evaluate_model(model_path: str, selection_path: str, test_store: str) -> float:
    model = read_model(model_path)
    selection, stats = _load_selection(selection_path)
    store = read_feature_store(test_store)
    predicted, _ = predict(model, _selected(store, selection, stats))
    return accuracy(predicted, store.labels)


def sweep_pair(
    train_store: FeatureStore,
    test_store: FeatureStore,
    size: Optional[int],
    seed: int,
    count: int,
    c: float,
    gamma: float,
    tol: float,
    workers: Optional[int] = None,
) -> Tuple[float, int]:
    """Subsample, normalize, select and train from scratch; returns (accuracy, union size)."""
    class_count = int(train_store.labels.max()) + 1
    rows = select_rows(train_store.labels, class_count, size, seed)
    normalized, stats = normalize_features(np.asarray(train_store.features)[rows])
    labels = train_store.labels[rows]
    selection = select_all_classes(normalized, labels, count, workers=workers)
    if selection.union.size == 0:
        raise SvmError("Selection is empty; nothing to train on")
    model = train(apply_selection(normalized, selection), labels, c=c, gamma=gamma, tol=tol, workers=workers)
    columns = selection.union
    test = stats.apply(np.asarray(test_store.features)[:, columns], columns=columns)
    predicted, _ = predict(model, test)
    return accuracy(predicted, test_store.labels), int(columns.size)


def run_eval(
    output: str,
    model_path: Optional[str] = None,
    selection_path: Optional[str] = None,
    test_store: Optional[str] = None,
    pairs: Sequence[str] = (),
    sizes: Sequence[int] = (),
    seeds: Sequence[int] = (0,),
    count: int = 108,
    c: float = 14.0,
    gamma: float = 2e-5,
    tol: float = 1e-3,
    workers: Optional[int] = None,
) -> List[Dict[str, object]]:
    """Accuracy table for a trained model, or for train:test pairs over sizes and seeds."""
    rows: List[Dict[str, object]] = []
    timings: Dict[str, float] = {}
    start = time.perf_counter()

    if model_path:
        if not (selection_path and test_store):
            raise UsageError("--model needs --selection and --test")
        acc = evaluate_model(model_path, selection_path, test_store)
        rows.append({"configuration": Path(model_path).name, "train_size": "", "seed": "", "accuracy": acc})
        click.echo(f"✅ Accuracy {acc:.4f} on {test_store}")
    elif pairs:
        for pair in pairs:
            train_path, sep, test_path = pair.partition(":")
            if not sep:
                raise UsageError(f"--pair must look like TRAIN:TEST, got '{pair}'")
            train_data = read_feature_store(train_path)
            test_data = read_feature_store(test_path)
            label = Path(train_path).parent.name or Path(train_path).stem
            for size in (sizes or [None]):
                for seed in seeds:
                    acc, union = sweep_pair(train_data, test_data, size, seed, count, c, gamma, tol, workers)
                    rows.append({
                        "configuration": label,
                        "logged": train_data.logged,
                        "train_size": size if size is not None else train_data.rows,
                        "seed": seed,
                        "selected": union,
                        "accuracy": acc,
                    })
                    click.echo(f"  📄 {label} size={rows[-1]['train_size']} seed={seed}: {acc:.4f}")
    else:
        raise UsageError("Give either --model/--selection/--test or at least one --pair")

    timings["eval_s"] = time.perf_counter() - start
    csv_path, md_path = write_table(rows, output)
    click.echo(f"✅ Results written to {csv_path} and {md_path}")
    write_manifest(
        "eval",
        Path(output).with_name(Path(output).name + ".manifest.yaml"),
        parameters={
            "model": model_path, "selection": selection_path, "test": test_store, "pairs": list(pairs),
            "sizes": list(sizes), "count": count, "c": c, "gamma": gamma, "tol": tol,
        },
        seeds=list(seeds),
        timings=timings,
        artifacts=[csv_path, md_path],
    )
    return rows

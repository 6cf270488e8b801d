"""
OLS feature selection on a training feature store.
"""

import logging
import time
from pathlib import Path
from typing import Optional, Sequence

import click
import numpy as np
import yaml

from ..config import ScatterConfig
from ..errors import UsageError
from ..featsel import OlsSelection, merge_selections, select_all_classes
from ..scatternet import normalize_features
from ..store import read_feature_store, save_stats, sidecar_path, stats_path, write_selection
from . import write_manifest

logger = logging.getLogger(__name__)


def store_config(store_path: Path) -> Optional[ScatterConfig]:
    """Configuration recorded in a store's sidecar, when present."""
    sidecar = sidecar_path(store_path)
    if not sidecar.is_file():
        return None
    with open(sidecar, "r") as f:
        data = yaml.safe_load(f) or {}
    return ScatterConfig(**data["config"]) if "config" in data else None


def resolution_blocks(index_map: np.ndarray) -> list:
    return [np.flatnonzero(index_map["resolution"] == rid) for rid in np.unique(index_map["resolution"])]


def run_select(
    train_store: str,
    output: str,
    counts: Sequence[int],
    workers: Optional[int] = None,
) -> OlsSelection:
    """Select ``counts`` columns per class (one count, or one per resolution)."""
    store_path = Path(train_store)
    store = read_feature_store(store_path)
    blocks = resolution_blocks(store.index_map)
    if len(counts) not in (1, len(blocks)):
        raise UsageError(f"Give one --count or one per resolution ({len(blocks)}), got {len(counts)}")
    click.echo(f"🔍 Normalizing {store.rows} x {store.vector_length} training features...")
    normalized, stats = normalize_features(store.features)

    start = time.perf_counter()
    if len(counts) == 1:
        selection = select_all_classes(normalized, store.labels, counts[0], workers=workers)
    else:
        selection = merge_selections([
            select_all_classes(normalized, store.labels, count, columns=columns, block=b, workers=workers)
            for b, (count, columns) in enumerate(zip(counts, blocks))
        ])
    ols_seconds = time.perf_counter() - start

    output_path = Path(output)
    write_selection(output_path, selection)
    save_stats(stats_path(output_path), stats)

    click.echo(f"✅ Selected {selection.union.size} of {store.vector_length} dimensions")
    click.echo(f"  FR overall: {100 * selection.feature_richness():.2f}%")
    if len(blocks) > 1:
        for rid, columns in enumerate(blocks):
            click.echo(f"  FR resolution {rid}: {100 * selection.feature_richness(columns):.2f}%")
    click.echo(f"  T-OLS: {ols_seconds:.2f} s")
    if selection.exhausted:
        click.echo("  ⚠️  Some classes ran out of informative columns before reaching the count")

    write_manifest(
        "select",
        output_path.with_name(output_path.name + ".manifest.yaml"),
        config=store_config(store_path),
        parameters={
            "train_store": str(store_path), "counts": list(counts),
            "union": int(selection.union.size), "feature_richness": selection.feature_richness(),
        },
        timings={"ols_s": ols_seconds},
        artifacts=[output_path, stats_path(output_path)],
    )
    return selection

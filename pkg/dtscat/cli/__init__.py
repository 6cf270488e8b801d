"""
Command-line tools for the dtscat pipeline.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import click

from .. import __version__
from ..config import RunManifest, ScatterConfig, config_hash, save_manifest
from ..errors import UsageError


def write_manifest(
    command: str,
    path: Union[str, Path],
    config: Optional[ScatterConfig] = None,
    parameters: Optional[Dict[str, Any]] = None,
    seeds: Sequence[int] = (),
    dataset: Optional[str] = None,
    timings: Optional[Dict[str, float]] = None,
    artifacts: Sequence[Union[str, Path]] = (),
) -> Path:
    manifest = RunManifest(
        command=command,
        version=__version__,
        config=config,
        config_hash=config_hash(config) if config is not None else None,
        parameters=parameters or {},
        seeds=list(seeds),
        dataset=dataset,
        timings=timings or {},
        artifacts=[str(a) for a in artifacts],
    )
    path = save_manifest(manifest, path)
    click.echo(f"📄 Manifest written to {path}")
    return path


def parse_int_list(text: Optional[str]) -> List[int]:
    """``"300,500,1000"`` -> ``[300, 500, 1000]``."""
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Expected a comma-separated list of integers, got '{text}'")


def parse_float_list(text: Optional[str]) -> List[float]:
    if not text:
        return []
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Expected a comma-separated list of numbers, got '{text}'")

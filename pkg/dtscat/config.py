"""
Typed configuration and run manifests.

Configs are pydantic models loaded from YAML. Several files can be layered;
a serialized RunManifest contributes its ``config`` section so that a
manifest re-executes the run it describes.
"""

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import UsageError

logger = logging.getLogger(__name__)

DATA_ENV_VAR = "DTSCAT_DATA"


class Resolution(BaseModel):
    """One multi-resolution pipeline: square side length and wavelet depth."""

    model_config = ConfigDict(frozen=True)

    side: int = Field(gt=0)
    levels: int = Field(ge=2)
    invariance_scale: Optional[int] = None

    @model_validator(mode="after")
    def _check_geometry(self) -> "Resolution":
        if self.side % (2 ** self.levels):
            raise ValueError(f"side {self.side} is not divisible by 2^{self.levels}")
        if self.invariance_scale is not None:
            if self.invariance_scale < self.levels:
                raise ValueError("invariance_scale must be >= levels")
            if self.side < 2 ** self.invariance_scale:
                raise ValueError(f"side {self.side} too small for invariance scale {self.invariance_scale}")
        return self

    @property
    def J(self) -> int:
        return self.invariance_scale if self.invariance_scale is not None else self.levels

    @property
    def cells(self) -> int:
        """Cells per axis after smoothing to spacing 2^J."""
        n = self.side
        for _ in range(self.J):
            n = (n + 1) // 2
        return n

    @property
    def label(self) -> str:
        return f"{self.side}:{self.levels}"

    @classmethod
    def parse(cls, text: str) -> "Resolution":
        """Parse ``side:levels`` or ``side:levels:J``."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"Resolution must look like 64:5 or 64:5:6, got '{text}'")
        try:
            numbers = [int(p) for p in parts]
            return cls(side=numbers[0], levels=numbers[1], invariance_scale=numbers[2] if len(numbers) == 3 else None)
        except (ValueError, ValidationError) as e:
            raise ConfigError(f"Invalid resolution '{text}': {e}")


def _default_resolutions() -> Tuple[Resolution, ...]:
    return (Resolution(side=64, levels=5), Resolution(side=48, levels=4))


class ScatterConfig(BaseModel):
    """Scattering network configuration shared by every extracted image."""

    model_config = ConfigDict(frozen=True)

    native_side: int = Field(default=32, gt=1)
    resolutions: Tuple[Resolution, ...] = Field(default_factory=_default_resolutions)
    orientations: Literal[6] = 6
    log_mode: Literal["fixed", "auto", "off"] = "fixed"
    log_params: Tuple[float, ...] = (1.1, 3.8, 3.8, 7.0)
    second_layer_rule: Literal["j2>j1"] = "j2>j1"
    max_order: Literal[1, 2] = 2
    channel_mode: Literal["independent"] = "independent"

    @field_validator("log_params")
    @classmethod
    def _positive_k(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(k <= 0 for k in value):
            raise ValueError("every log parameter k_j must be > 0")
        return value

    @model_validator(mode="after")
    def _check_resolutions(self) -> "ScatterConfig":
        if not self.resolutions:
            raise ValueError("at least one resolution is required")
        sides = [r.side for r in self.resolutions]
        if len(set(sides)) != len(sides):
            raise ValueError(f"resolution sides must be distinct, got {sides}")
        if self.log_mode == "fixed":
            needed = max(r.levels for r in self.resolutions) - 1
            if len(self.log_params) < needed:
                raise ValueError(f"log_params needs {needed} values, got {len(self.log_params)}")
        return self

    def resolution_for(self, side: int) -> Resolution:
        for resolution in self.resolutions:
            if resolution.side == side:
                return resolution
        from .scatternet import ScatterError
        raise ScatterError(f"No configured resolution has side {side} (configured: {[r.side for r in self.resolutions]})")

    def k_for_scale(self, scale: int, coarsest: int) -> Optional[float]:
        """Log parameter for ``scale``, or None when the envelope stays linear."""
        if self.log_mode == "off" or scale >= coarsest:
            return None
        if self.log_mode == "auto":
            from .scatternet import ScatterError
            raise ScatterError("log_mode 'auto' must be resolved with tune-log before extraction")
        return self.log_params[scale - 1]

    def with_overrides(self, **changes: Any) -> "ScatterConfig":
        data = self.model_dump()
        data.update({k: v for k, v in changes.items() if v is not None})
        try:
            return ScatterConfig(**data)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}")


class RunManifest(BaseModel):
    """Everything needed to re-execute one command."""

    command: str
    version: str
    config: Optional[ScatterConfig] = None
    config_hash: Optional[str] = None
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    dataset: Optional[str] = None
    timings: Dict[str, float] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    created: float = Field(default_factory=time.time)


def config_hash(config: ScatterConfig) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Failed to read config {path}: {e}")
        raise ConfigError(f"Cannot read config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a mapping")
    if "command" in data and "config" in data:
        data = data["config"] or {}
    return data


def load_config(paths: Sequence[Union[str, Path]] = ()) -> ScatterConfig:
    """Layer YAML config files (later files win) over the defaults."""
    merged: Dict[str, Any] = {}
    for path in paths:
        merged.update(_read_yaml(path))
    merged.pop("report", None)
    try:
        return ScatterConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}")


def save_manifest(manifest: RunManifest, path: Union[str, Path]) -> Path:
    """Write ``manifest`` as YAML next to the artifacts it describes."""
    from .store import atomic_write

    path = Path(path)
    text = yaml.safe_dump(manifest.model_dump(mode="json"), sort_keys=False)
    with atomic_write(path, "w") as f:
        f.write(text)
    logger.info(f"Wrote manifest {path}")
    return path


class ConfigError(UsageError):
    """Exception raised for invalid configuration input."""
    pass

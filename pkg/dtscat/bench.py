"""
Wall-clock timing of the scattering pipeline.

Stages are timed inside ``scatter_layers`` through a ``StageTimer``;
per-image extraction times are measured for each resolution alone and for
all of them together. An optional reference computes every subband by FFT
convolution of the image with that subband's synthesis atom.
"""

import contextlib
import logging
import time
from collections import defaultdict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import signal

from .config import ScatterConfig
from .dtcwt import DtcwtPyramid, FilterSet, forward, inverse, load_default_filters
from .errors import UsageError
from .scatternet import extract_features, scatter_layers, upsample

logger = logging.getLogger(__name__)

STAGES = ("forward", "modulus", "log", "smoothing", "layer2")


class StageTimer:
    """Accumulates elapsed seconds per named stage for the current iteration."""

    def __init__(self):
        self.current: Dict[str, float] = defaultdict(float)

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.current[name] += time.perf_counter() - start

    def reset(self) -> Dict[str, float]:
        finished, self.current = dict(self.current), defaultdict(float)
        return finished


class TimingStats(BaseModel):
    name: str
    count: int
    mean: float
    std: float
    min: float
    max: float

    @classmethod
    def from_samples(cls, name: str, samples: List[float]) -> "TimingStats":
        values = np.asarray(samples, dtype=np.float64)
        return cls(
            name=name,
            count=int(values.size),
            mean=float(values.mean()),
            std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
            min=float(values.min()),
            max=float(values.max()),
        )


class BenchReport(BaseModel):
    side: int
    levels: int
    iterations: int
    stages: List[TimingStats] = Field(default_factory=list)
    per_image: List[TimingStats] = Field(default_factory=list)
    fft_reference: Optional[TimingStats] = None
    spatial_forward: Optional[TimingStats] = None

    def rows(self) -> List[Dict[str, object]]:
        entries = [("stage", s) for s in self.stages] + [("per_image", s) for s in self.per_image]
        if self.spatial_forward is not None:
            entries.append(("comparator", self.spatial_forward))
        if self.fft_reference is not None:
            entries.append(("comparator", self.fft_reference))
        return [
            {"group": group, "name": s.name, "count": s.count, "mean_s": s.mean, "std_s": s.std,
             "min_s": s.min, "max_s": s.max}
            for group, s in entries
        ]


def _check_iterations(iterations: int) -> None:
    if iterations < 1:
        raise UsageError(f"iterations must be >= 1, got {iterations}")


def time_stages(
    image: np.ndarray,
    config: ScatterConfig,
    iterations: int,
    filters: Optional[FilterSet] = None,
) -> List[TimingStats]:
    """Per-stage times of ``scatter_layers`` on one square image."""
    _check_iterations(iterations)
    timer = StageTimer()
    samples: Dict[str, List[float]] = {name: [] for name in STAGES}
    for _ in range(iterations):
        scatter_layers(image, config, filters, timer=timer)
        finished = timer.reset()
        for name in STAGES:
            samples[name].append(finished.get(name, 0.0))
    return [TimingStats.from_samples(name, samples[name]) for name in STAGES]


def time_per_image(
    rgb_image: np.ndarray,
    config: ScatterConfig,
    iterations: int,
    filters: Optional[FilterSet] = None,
) -> List[TimingStats]:
    """Extraction time for each resolution alone and for the full configuration."""
    _check_iterations(iterations)
    variants: List[Tuple[str, ScatterConfig]] = [
        (res.label, config.with_overrides(resolutions=(res.model_dump(),))) for res in config.resolutions
    ]
    if len(config.resolutions) > 1:
        variants.append(("+".join(r.label for r in config.resolutions), config))
    results = []
    for name, variant in variants:
        samples = []
        for _ in range(iterations):
            start = time.perf_counter()
            extract_features(rgb_image, variant, filters)
            samples.append(time.perf_counter() - start)
        results.append(TimingStats.from_samples(name, samples))
        logger.info(f"Per-image extraction {name}: {results[-1].mean * 1e3:.2f} ms")
    return results


def synthesis_atoms(side: int, levels: int, filters: Optional[FilterSet] = None) -> Dict[Tuple[int, int], np.ndarray]:
    """Complex image-domain atom of each (level, band), centred in a ``side`` square."""
    filters = filters or load_default_filters()
    template = forward(np.zeros((side, side)), levels, filters)
    atoms = {}
    for level, bands in enumerate(template.highpasses, start=1):
        h, w = bands.shape[:2]
        for band in range(6):
            parts = []
            for value in (1.0, 1j):
                highpasses = [np.zeros_like(b) for b in template.highpasses]
                highpasses[level - 1][h // 2, w // 2, band] = value
                pyramid = DtcwtPyramid(
                    lowpass=np.zeros_like(template.lowpass),
                    highpasses=tuple(highpasses),
                    original_shape=template.original_shape,
                )
                parts.append(inverse(pyramid, filters))
            atoms[(level, band)] = parts[0] + 1j * parts[1]
    return atoms


def fft_subbands(image: np.ndarray, atoms: Dict[Tuple[int, int], np.ndarray]) -> Dict[Tuple[int, int], np.ndarray]:
    """Every subband by full-size FFT correlation with its atom, then decimation."""
    out = {}
    for (level, band), atom in atoms.items():
        step = 2 ** level
        kernel = np.conj(atom[::-1, ::-1])
        response = signal.fftconvolve(image, kernel, mode="same")
        out[(level, band)] = response[::step, ::step]
    return out


def run_bench(
    config: ScatterConfig,
    iterations: int = 100,
    seed: int = 0,
    fft: bool = False,
    filters: Optional[FilterSet] = None,
) -> BenchReport:
    """Time every stage on a random image of the first configured resolution."""
    filters = filters or load_default_filters()
    rng = np.random.default_rng(seed)
    resolution = config.resolutions[0]
    rgb = rng.random((config.native_side, config.native_side, 3))
    plane = upsample(rgb, resolution.side)[:, :, 0]

    report = BenchReport(side=resolution.side, levels=resolution.levels, iterations=iterations)
    report.stages = time_stages(plane, config, iterations, filters)
    report.per_image = time_per_image(rgb, config, iterations, filters)

    if fft:
        atoms = synthesis_atoms(resolution.side, resolution.levels, filters)
        spatial, reference = [], []
        for _ in range(iterations):
            start = time.perf_counter()
            forward(plane, resolution.levels, filters)
            spatial.append(time.perf_counter() - start)
            start = time.perf_counter()
            fft_subbands(plane, atoms)
            reference.append(time.perf_counter() - start)
        report.spatial_forward = TimingStats.from_samples("spatial_forward", spatial)
        report.fft_reference = TimingStats.from_samples("fft_per_band", reference)
        logger.info(
            f"Forward transform: spatial {report.spatial_forward.mean * 1e3:.2f} ms, "
            f"FFT per band {report.fft_reference.mean * 1e3:.2f} ms"
        )
    return report

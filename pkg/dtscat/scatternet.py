"""
DTCWT scattering network.

Turns an image into translation-invariant features: modulus envelopes of
the complex subbands, a parametric log transform on all but the coarsest
scale, a second cascade of wavelet filtering on the log envelopes, and
lowpass averaging of every layer to a common grid of spacing 2^J.
"""

import contextlib
import functools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from .config import Resolution, ScatterConfig
from .dtcwt import DtcwtPyramid, FilterSet, forward, load_default_filters, lowpass_decimate
from .errors import DataError

logger = logging.getLogger(__name__)

# Candidate k values searched by the mean-median rule.
DEFAULT_K_GRID = tuple(np.geomspace(0.1, 20.0, 25))

STD_FLOOR = 1e-12

INDEX_DTYPE = np.dtype([
    ("resolution", "<u1"),
    ("layer", "<u1"),
    ("j1", "<i1"),
    ("j2", "<i1"),
    ("r1", "<i1"),
    ("r2", "<i1"),
    ("row", "<u2"),
    ("col", "<u2"),
    ("channel", "<u1"),
    ("logged", "<u1"),
])


@dataclass
class EnvelopePlane:
    """Modulus of one complex subband."""
    scale: int
    orientation: int
    values: np.ndarray


@dataclass
class ScatterFeatureVector:
    """Flat feature vector with one INDEX_DTYPE descriptor per entry."""
    values: np.ndarray
    index_map: np.ndarray

    def __len__(self) -> int:
        return self.values.size


@dataclass
class ScatterLayers:
    """Per-layer coefficient planes of one resolution, all at spacing 2^J.

    Trailing axes of the input (colour channels) are kept last:
    ``s0`` is ``(cells, cells, *batch)``, ``s1[j]`` is
    ``(cells, cells, 6, *batch)`` and ``s2[(j1, j2)]`` is
    ``(cells, cells, 6, 6, *batch)`` indexed by ``(r1, r2)``.
    """

    resolution: Resolution
    s0: np.ndarray
    s1: Dict[int, np.ndarray]
    s2: Dict[Tuple[int, int], np.ndarray]
    envelopes: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def flatten(self) -> np.ndarray:
        """Concatenate in descriptor order: m, scale path, orientations, cells, trailing axes."""
        parts = [self.s0.ravel()]
        for j in sorted(self.s1):
            parts.append(np.moveaxis(self.s1[j], 2, 0).ravel())
        for path in sorted(self.s2):
            parts.append(np.moveaxis(self.s2[path], (2, 3), (0, 1)).ravel())
        return np.concatenate(parts)


class ScaleLogFit(BaseModel):
    """Mean-median search result for one scale."""
    scale: int
    k: float
    gap: float
    gap_at_grid_min: float
    skew_before: float
    skew_after: float
    grid: List[float] = Field(default_factory=list)
    gaps: List[float] = Field(default_factory=list)


class LogParamReport(BaseModel):
    """Chosen k per scale with the symmetry achieved by each choice."""
    fits: List[ScaleLogFit] = Field(default_factory=list)

    @property
    def log_params(self) -> List[float]:
        return [fit.k for fit in sorted(self.fits, key=lambda f: f.scale)]


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def modulus(pyramid: DtcwtPyramid) -> List[EnvelopePlane]:
    """One envelope per (scale, orientation) of a 2D pyramid."""
    envelopes = []
    for level, bands in enumerate(pyramid.highpasses, start=1):
        if bands.ndim < 3 or bands.shape[2] != 6:
            raise ScatterError(f"Level {level} is not a 2D oriented subband stack: {bands.shape}")
        magnitudes = np.abs(bands)
        for band in range(6):
            envelopes.append(EnvelopePlane(scale=level, orientation=band, values=magnitudes[:, :, band]))
    return envelopes


def log_transform(envelope, k: float) -> np.ndarray:
    """``log(U + k)`` elementwise; accepts an EnvelopePlane or an array."""
    if not k > 0:
        raise ScatterError(f"Log parameter k must be > 0, got {k}")
    values = envelope.values if isinstance(envelope, EnvelopePlane) else envelope
    return np.log(np.asarray(values, dtype=np.float64) + k)


def _skewness(x: np.ndarray) -> float:
    if x.size < 3 or np.ptp(x) == 0:
        return 0.0
    return float(stats.skew(x))


def tune_log_param(
    samples: Iterable[float],
    grid: Optional[Sequence[float]] = None,
    scale: int = 1,
) -> Tuple[float, LogParamReport]:
    """Pick the grid k that makes ``log(samples + k)`` most symmetric.

    Symmetry is measured as ``|mean - median|``; ties go to the smallest k.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ScatterError("Cannot tune log parameter on an empty sample set")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ScatterError("Envelope samples must be finite and nonnegative")
    candidates = np.sort(np.asarray(DEFAULT_K_GRID if grid is None else grid, dtype=np.float64))
    if candidates.size == 0 or np.any(candidates <= 0):
        raise ScatterError("Search grid must be nonempty and strictly positive")

    gaps = np.empty(candidates.size)
    for i, k in enumerate(candidates):
        logged = np.log(x + k)
        gaps[i] = abs(np.mean(logged) - np.median(logged))
    best = int(np.argmin(gaps))
    k = float(candidates[best])

    fit = ScaleLogFit(
        scale=scale,
        k=k,
        gap=float(gaps[best]),
        gap_at_grid_min=float(gaps[0]),
        skew_before=_skewness(x),
        skew_after=_skewness(np.log(x + k)),
        grid=candidates.tolist(),
        gaps=gaps.tolist(),
    )
    logger.info(f"Scale {scale}: k={k:.4g} |mean-median| {gaps[0]:.4g} -> {gaps[best]:.4g}")
    return k, LogParamReport(fits=[fit])


# ---------------------------------------------------------------------------
# Averaging and the layered network
# ---------------------------------------------------------------------------

def smooth_to_invariance(
    plane: np.ndarray,
    current_scale: int,
    target_scale: int,
    filters: Optional[FilterSet] = None,
) -> np.ndarray:
    """Average a plane at spacing 2^j down to spacing 2^J.

    Applies the tree-a Q-shift lowpass with decimation along both axes,
    ``target_scale - current_scale`` times. Trailing axes are batched.
    """
    if target_scale < current_scale:
        raise ScatterError(f"Cannot smooth from scale {current_scale} to finer scale {target_scale}")
    filters = filters or load_default_filters()
    y = np.asarray(plane, dtype=np.float64)
    for _ in range(target_scale - current_scale):
        y = lowpass_decimate(y, filters.h0a)
        y = np.swapaxes(lowpass_decimate(np.swapaxes(y, 0, 1), filters.h0a), 0, 1)
    return y


def _stage(timer, name: str):
    return timer.stage(name) if timer is not None else contextlib.nullcontext()


def scatter_layers(
    image: np.ndarray,
    config: ScatterConfig,
    filters: Optional[FilterSet] = None,
    timer=None,
) -> ScatterLayers:
    """Zeroth, first and second order scattering planes of a square image.

    ``image`` is ``(side, side, *batch)``; each trailing slice (a colour
    channel) is processed independently. ``timer`` (a ``bench.StageTimer``)
    accumulates wall time per stage when given.
    """
    filters = filters or load_default_filters()
    x = np.asarray(image, dtype=np.float64)
    if x.ndim < 2 or x.shape[0] != x.shape[1]:
        raise ScatterError(f"Expected a square image, got shape {x.shape}")
    resolution = config.resolution_for(x.shape[0])
    levels, J = resolution.levels, resolution.J

    with _stage(timer, "forward"):
        pyramid = forward(x, levels, filters)
    with _stage(timer, "smoothing"):
        s0 = smooth_to_invariance(x, 0, J, filters)

    envelopes: Dict[int, np.ndarray] = {}
    s1: Dict[int, np.ndarray] = {}
    for j, bands in enumerate(pyramid.highpasses, start=1):
        k = config.k_for_scale(j, coarsest=levels)
        with _stage(timer, "modulus"):
            envelope = np.abs(bands)
        with _stage(timer, "log"):
            envelopes[j] = envelope if k is None else log_transform(envelope, k)
        with _stage(timer, "smoothing"):
            s1[j] = smooth_to_invariance(envelopes[j], j, J, filters)

    s2: Dict[Tuple[int, int], np.ndarray] = {}
    if config.max_order >= 2:
        with _stage(timer, "layer2"):
            for j1 in range(1, levels):
                inner = forward(envelopes[j1], levels - j1, filters)
                for depth, bands in enumerate(inner.highpasses, start=1):
                    j2 = j1 + depth
                    smoothed = smooth_to_invariance(np.abs(bands), j2, J, filters)
                    # inner transform puts r2 before r1
                    s2[(j1, j2)] = np.swapaxes(smoothed, 2, 3)

    return ScatterLayers(resolution=resolution, s0=s0, s1=s1, s2=s2, envelopes=envelopes)


# ---------------------------------------------------------------------------
# Descriptor map
# ---------------------------------------------------------------------------

def _descriptor_block(rid, layer, j1, j2, r1s, r2s, cells, channels, logged) -> np.ndarray:
    r1, r2, row, col, channel = np.meshgrid(
        np.asarray(r1s), np.asarray(r2s), np.arange(cells), np.arange(cells), np.arange(channels),
        indexing="ij",
    )
    block = np.zeros(r1.size, dtype=INDEX_DTYPE)
    block["resolution"] = rid
    block["layer"] = layer
    block["j1"] = j1
    block["j2"] = j2
    block["r1"] = r1.ravel()
    block["r2"] = r2.ravel()
    block["row"] = row.ravel()
    block["col"] = col.ravel()
    block["channel"] = channel.ravel()
    block["logged"] = int(logged)
    return block


@functools.lru_cache(maxsize=16)
def _cached_index(config: ScatterConfig, channels: int) -> np.ndarray:
    blocks = []
    bands = range(6)
    for rid, res in enumerate(config.resolutions):
        cells = res.cells
        blocks.append(_descriptor_block(rid, 0, -1, -1, [-1], [-1], cells, channels, False))
        logged = {j: config.log_mode == "fixed" and j < res.levels for j in range(1, res.levels + 1)}
        for j in range(1, res.levels + 1):
            blocks.append(_descriptor_block(rid, 1, j, -1, bands, [-1], cells, channels, logged[j]))
        if config.max_order >= 2:
            for j1 in range(1, res.levels):
                for j2 in range(j1 + 1, res.levels + 1):
                    blocks.append(_descriptor_block(rid, 2, j1, j2, bands, bands, cells, channels, logged[j1]))
    index = np.concatenate(blocks)
    index.setflags(write=False)
    return index


def feature_index(config: ScatterConfig, channels: int = 3) -> np.ndarray:
    """Descriptor of every feature dimension, in extraction order."""
    return _cached_index(config, channels)


def feature_length(config: ScatterConfig, channels: int = 3) -> int:
    return int(feature_index(config, channels).size)


def resolution_columns(config: ScatterConfig, channels: int = 3) -> List[np.ndarray]:
    """Column indices belonging to each configured resolution."""
    index = feature_index(config, channels)
    return [np.flatnonzero(index["resolution"] == rid) for rid in range(len(config.resolutions))]


# ---------------------------------------------------------------------------
# Images to feature vectors
# ---------------------------------------------------------------------------

def _cubic_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Catmull-Rom resampling matrix with linear extrapolation past the edges."""
    u = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
    base = np.floor(u).astype(int)
    t = u - base
    taps = (
        (-t ** 3 + 2 * t ** 2 - t) / 2,
        (3 * t ** 3 - 5 * t ** 2 + 2) / 2,
        (-3 * t ** 3 + 4 * t ** 2 + t) / 2,
        (t ** 3 - t ** 2) / 2,
    )
    weights = np.zeros((n_dst, n_src))
    rows = np.arange(n_dst)
    for offset, tap in zip(range(-1, 3), taps):
        k = base + offset
        inside = (k >= 0) & (k < n_src)
        np.add.at(weights, (rows[inside], k[inside]), tap[inside])
        # outside samples continue the line through the two nearest edge pixels
        low = k < 0
        np.add.at(weights, (rows[low], 0), tap[low] * (1 - k[low]))
        np.add.at(weights, (rows[low], 1), tap[low] * k[low])
        high = k >= n_src
        over = k[high] - (n_src - 1)
        np.add.at(weights, (rows[high], n_src - 1), tap[high] * (1 + over))
        np.add.at(weights, (rows[high], n_src - 2), -tap[high] * over)
    return weights


def upsample(image: np.ndarray, target_side: int) -> np.ndarray:
    """Bicubic resize of ``(h, w, *channels)`` to ``target_side`` squared, clamped to [0, 1]."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim < 2:
        raise ScatterError(f"Expected at least 2 dimensions, got shape {x.shape}")
    h, w = x.shape[:2]
    if target_side < h or target_side < w:
        raise ScatterError(f"Refusing to downscale {h}x{w} to {target_side}x{target_side}")
    if min(h, w) < 2:
        raise ScatterError("Cannot interpolate an image narrower than 2 pixels")
    y = np.tensordot(_cubic_weights(h, target_side), x, axes=(1, 0))
    y = np.moveaxis(np.tensordot(_cubic_weights(w, target_side), y, axes=(1, 1)), 0, 1)
    return np.clip(y, 0.0, 1.0)


def extract_features(
    rgb_image: np.ndarray,
    config: ScatterConfig,
    filters: Optional[FilterSet] = None,
) -> ScatterFeatureVector:
    """Scattering features of one ``(side, side, 3)`` image over every resolution."""
    x = np.asarray(rgb_image, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ScatterError(f"Expected a 3-channel (h, w, 3) image, got shape {x.shape}")
    if x.shape[:2] != (config.native_side, config.native_side):
        raise ScatterError(f"Expected {config.native_side}x{config.native_side} input, got {x.shape[:2]}")

    parts = []
    for resolution in config.resolutions:
        layers = scatter_layers(upsample(x, resolution.side), config, filters)
        parts.append(layers.flatten())
    values = np.concatenate(parts)
    index = feature_index(config, channels=3)
    if values.size != index.size:
        raise ScatterError(f"Feature length {values.size} does not match descriptor map {index.size}")
    return ScatterFeatureVector(values=values, index_map=index)


def extract_many(
    images: np.ndarray,
    config: ScatterConfig,
    filters: Optional[FilterSet] = None,
) -> np.ndarray:
    """Feature matrix ``(N, D)`` of a stack of ``(N, side, side, 3)`` images."""
    images = np.asarray(images)
    if images.ndim != 4:
        raise ScatterError(f"Expected an (N, h, w, 3) image stack, got shape {images.shape}")
    out = np.empty((images.shape[0], feature_length(config, channels=3)), dtype=np.float32)
    for i, image in enumerate(images):
        out[i] = extract_features(image, config, filters).values
    return out


def tune_log_params(
    images: np.ndarray,
    config: ScatterConfig,
    grid: Optional[Sequence[float]] = None,
    filters: Optional[FilterSet] = None,
) -> Tuple[ScatterConfig, LogParamReport]:
    """Choose k_j for every logged scale from a sample of training images.

    Envelopes of each scale are pooled over images, orientations and
    channels of the first configured resolution. Returns a copy of
    ``config`` in fixed log mode carrying the chosen parameters.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ScatterError(f"Expected a nonempty (N, h, w, 3) image stack, got shape {images.shape}")
    filters = filters or load_default_filters()
    resolution = config.resolutions[0]
    logged_scales = max(r.levels for r in config.resolutions) - 1

    pooled: Dict[int, List[np.ndarray]] = {j: [] for j in range(1, logged_scales + 1)}
    for image in images:
        pyramid = forward(upsample(image, resolution.side), resolution.levels, filters)
        for j, bands in enumerate(pyramid.highpasses, start=1):
            if j in pooled:
                pooled[j].append(np.abs(bands).ravel())

    report = LogParamReport()
    params: List[float] = []
    for j in range(1, logged_scales + 1):
        if not pooled[j]:
            # first resolution is shallower than the deepest one
            k = params[-1] if params else float(DEFAULT_K_GRID[0])
            logger.warning(f"No envelopes at scale {j} in {resolution.label}; reusing k={k:.4g}")
            params.append(k)
            continue
        k, fit = tune_log_param(np.concatenate(pooled[j]), grid, scale=j)
        params.append(k)
        report.fits.extend(fit.fits)

    tuned = config.with_overrides(log_mode="fixed", log_params=tuple(params))
    return tuned, report


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass
class FeatureStats:
    """Per-dimension training mean and standard deviation."""
    mean: np.ndarray
    std: np.ndarray
    floor: float = STD_FLOOR

    def apply(self, matrix: np.ndarray, columns: Optional[np.ndarray] = None) -> np.ndarray:
        """z-score ``matrix``; ``columns`` selects the statistics when it is a column subset."""
        mean, std = self.mean, self.std
        if columns is not None:
            mean, std = mean[columns], std[columns]
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[-1] != mean.size:
            raise ScatterError(f"Matrix width {matrix.shape[-1]} does not match statistics width {mean.size}")
        scale = np.where(std < self.floor, np.inf, std)
        return (matrix - mean) / scale


def normalize_features(dataset: np.ndarray, chunk_rows: int = 1024) -> Tuple[np.ndarray, FeatureStats]:
    """z-score every column using statistics of ``dataset`` itself.

    Statistics are accumulated over row chunks so memory-mapped stores are
    read once for the sums. Columns whose std is below the floor become zero.
    """
    matrix = np.asarray(dataset)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ScatterError(f"Normalization needs at least 2 rows, got shape {matrix.shape}")
    rows = matrix.shape[0]

    total = np.zeros(matrix.shape[1])
    for start in range(0, rows, chunk_rows):
        total += matrix[start:start + chunk_rows].sum(axis=0, dtype=np.float64)
    mean = total / rows
    squares = np.zeros(matrix.shape[1])
    for start in range(0, rows, chunk_rows):
        centered = matrix[start:start + chunk_rows].astype(np.float64) - mean
        squares += np.einsum("ij,ij->j", centered, centered)
    std = np.sqrt(squares / rows)

    stats_ = FeatureStats(mean=mean, std=std)
    return stats_.apply(matrix), stats_


class ScatterError(DataError):
    """Exception raised for invalid scattering inputs or configuration."""
    pass

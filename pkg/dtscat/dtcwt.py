"""
Dual-tree complex wavelet transform.

Separable spatial-domain filter banks with half-sample symmetric boundary
extension. Level 1 filters without decimation and treats the even and odd
samples as tree a and tree b; levels 2 and above use Q-shift filters on the
interleaved trees. Every low-level routine filters along axis 0 and passes any
trailing axes through, so planes can be stacked and transformed in one call.
"""

import functools
import logging
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .errors import DataError

logger = logging.getLogger(__name__)

# Band order of the oriented subbands, in degrees.
ORIENTATIONS = (15, 45, 75, 105, 135, 165)

# Near-symmetric 13/19-tap biorthogonal pair, normalized to unit DC gain.
_NEAR_SYM_LO = np.array([
    -0.0017578125, 0.0, 0.022265625, -0.046875, -0.0482421875, 0.296875,
    0.55546875, 0.296875, -0.0482421875, -0.046875, 0.022265625, 0.0,
    -0.0017578125,
])
_NEAR_SYM_HI = np.array([
    -0.0000706263950893, 0.0, 0.0013419015066964, -0.0018833705357143,
    -0.0071568080357143, 0.0238560267857143, 0.0556431361607143,
    -0.0516880580357143, -0.2997576032366071, 0.5594308035714286,
    -0.2997576032366071, -0.0516880580357143, 0.0556431361607143,
    0.0238560267857143, -0.0071568080357143, -0.0018833705357143,
    0.0013419015066964, 0.0, -0.0000706263950893,
])

# 14-tap orthonormal Q-shift lowpass of tree a (sums to sqrt(2)).
_QSHIFT_14 = np.array([
    0.0032531427636532, -0.0038832119991585, 0.0346603468448535,
    -0.0388728012688278, -0.1172038876991153, 0.2752953846688820,
    0.7561456438925225, 0.5688104207121227, 0.0118660920337970,
    -0.1067118046866654, 0.0238253847949203, 0.0170252238815540,
    -0.0054394759372741, -0.0045568956284755,
])

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class FilterSet:
    """Analysis and synthesis filters for both trees.

    ``h0o``/``h1o`` are the level-1 analysis lowpass/highpass, shared by both
    trees; the even and odd samples of their undecimated output feed the two
    trees. ``g0o``/``g1o`` are their synthesis filters. ``h0a``, ``h1a`` (tree a)
    and ``h0b``, ``h1b`` (tree b) are the Q-shift analysis filters for levels 2
    and above, with tree b the time reverse of tree a. Tree b filters run on the
    even samples of the interleaved input.
    ``g*`` are the synthesis filters.
    """

    name: str
    h0o: np.ndarray
    h1o: np.ndarray
    g0o: np.ndarray
    g1o: np.ndarray
    h0a: np.ndarray
    h0b: np.ndarray
    h1a: np.ndarray
    h1b: np.ndarray
    g0a: np.ndarray
    g0b: np.ndarray
    g1a: np.ndarray
    g1b: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            if f.name == "name":
                continue
            taps = np.array(getattr(self, f.name), dtype=np.float64).ravel()
            taps.setflags(write=False)
            object.__setattr__(self, f.name, taps)

        for taps in (self.h0o, self.h1o, self.g0o, self.g1o):
            if taps.size % 2 == 0:
                raise TransformError("Level-1 filters must have odd length")
        qshift = (self.h0a, self.h0b, self.h1a, self.h1b, self.g0a, self.g0b, self.g1a, self.g1b)
        if len({taps.size for taps in qshift}) != 1 or self.h0a.size % 2:
            raise TransformError("Q-shift filters must share one even length")

    @classmethod
    def from_prototypes(
        cls,
        name: str,
        biort_lo: Sequence[float],
        biort_hi: Sequence[float],
        qshift_lo: Sequence[float],
    ) -> "FilterSet":
        """Derive the full set from a biorthogonal pair and a Q-shift lowpass.

        ``qshift_lo`` is the tree-a lowpass, the one with its larger centre tap
        first.
        """
        lo = np.asarray(biort_lo, dtype=np.float64)
        hi = np.asarray(biort_hi, dtype=np.float64)
        g1o = lo * (-1.0) ** (np.arange(lo.size) - lo.size // 2)
        g0o = hi * (-1.0) ** (np.arange(hi.size) - hi.size // 2)

        h0a = np.asarray(qshift_lo, dtype=np.float64)
        h0b = h0a[::-1]
        h1b = h0a.copy()
        h1b[(h0a.size // 2 + 1) % 2::2] *= -1.0
        h1a = h1b[::-1]

        return cls(
            name=name,
            h0o=lo, h1o=hi, g0o=g0o, g1o=g1o,
            h0a=h0a, h0b=h0b, h1a=h1a, h1b=h1b,
            g0a=h0a[::-1], g0b=h0b[::-1], g1a=h1a[::-1], g1b=h1b[::-1],
        )

    def qshift_delay(self, passband: float = 0.5, points: int = 64) -> float:
        """Group-delay difference between the two Q-shift lowpass filters.

        Fits a line to the unwrapped phase of each filter over
        ``(0, passband * pi]`` and returns the absolute slope difference.
        """
        w = np.linspace(0.02, passband, points) * np.pi
        delays = []
        for taps in (self.h0a, self.h0b):
            _, response = signal.freqz(taps, worN=w)
            phase = np.unwrap(np.angle(response))
            delays.append(-np.polyfit(w, phase, 1)[0])
        return float(abs(delays[0] - delays[1]))


@functools.lru_cache(maxsize=None)
def load_default_filters() -> FilterSet:
    """Embedded near-symmetric 13/19-tap level-1 pair and 14-tap Q-shift filters."""
    return FilterSet.from_prototypes("near-sym-13-19-qshift14", _NEAR_SYM_LO, _NEAR_SYM_HI, _QSHIFT_14)


@dataclass
class DtcwtPyramid:
    """Output of one forward transform.

    ``highpasses[j - 1]`` holds level ``j`` with shape ``(h, w, 6, *batch)``
    for 2D input, or ``(n, *batch)`` for 1D input. ``lowpass`` is the real
    scaling-coefficient plane at the coarsest level.
    """

    lowpass: np.ndarray
    highpasses: Tuple[np.ndarray, ...]
    original_shape: Tuple[int, ...]

    @property
    def levels(self) -> int:
        return len(self.highpasses)

    def subband(self, level: int, band: int) -> np.ndarray:
        """Complex subband at ``level`` (1-based) and band index (0-5)."""
        if not 1 <= level <= self.levels:
            raise TransformError(f"Level {level} outside 1..{self.levels}")
        return self.highpasses[level - 1][:, :, band]


# ---------------------------------------------------------------------------
# Column filtering primitives
# ---------------------------------------------------------------------------

def _reflect(x: np.ndarray, minx: float, maxx: float) -> np.ndarray:
    """Reflect ``x`` back into ``[minx, maxx]`` about both end points."""
    rng = maxx - minx
    period = 2 * rng
    mod = np.fmod(x - minx, period)
    mod = np.where(mod < 0, mod + period, mod)
    return np.where(mod >= rng, period - mod, mod) + minx


def _symmetric_index(n: int, before: int, after: int) -> np.ndarray:
    positions = np.arange(-before, n + after, dtype=np.float64)
    return np.rint(_reflect(positions, -0.5, n - 0.5)).astype(np.intp)


def _convolve_valid(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    m = taps.size
    n = x.shape[0] - m + 1
    out = np.zeros((n,) + x.shape[1:], dtype=np.result_type(x.dtype, np.float64))
    for k in range(m):
        out += taps[k] * x[m - 1 - k:m - 1 - k + n]
    return out


def _colfilter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Undecimated filtering of an odd-length filter along axis 0."""
    half = taps.size // 2
    return _convolve_valid(x[_symmetric_index(x.shape[0], half, half)], taps)


def _coldfilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Filter and decimate by 2 along axis 0 with a Q-shift pair.

    Even input samples go through ``ha`` and odd samples through ``hb``; the
    two outputs are interleaved in an order fixed by the sign of
    ``sum(ha * hb)``.
    """
    r = x.shape[0]
    if r % 4:
        raise TransformError(f"Decimating filter needs a multiple of 4 samples, got {r}")
    m = ha.size
    xe = x[_symmetric_index(r, m, m)]
    tree_a = _convolve_valid(xe[0::2], ha)[1::2]
    tree_b = _convolve_valid(xe[1::2], hb)[1::2]

    y = np.empty((r // 2,) + x.shape[1:], dtype=tree_a.dtype)
    if np.sum(ha * hb) > 0:
        y[0::2], y[1::2] = tree_a, tree_b
    else:
        y[0::2], y[1::2] = tree_b, tree_a
    return y


def _colifilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Interpolate by 2 along axis 0; the synthesis counterpart of ``_coldfilt``."""
    r = x.shape[0]
    if r % 2:
        raise TransformError(f"Interpolating filter needs an even sample count, got {r}")
    m = ha.size
    y = np.zeros((2 * r,) + x.shape[1:], dtype=np.result_type(x.dtype, np.float64))
    if not np.any(x):
        return y

    xe = x[_symmetric_index(r, m, m)]
    slot_a, slot_b = (0, 1) if np.sum(ha * hb) > 0 else (1, 0)
    start = m - m // 2
    for slot, taps, offset in ((slot_a, ha, 0), (slot_b, hb, 1)):
        upsampled = np.zeros((r + 2 * m,) + x.shape[1:], dtype=y.dtype)
        upsampled[0::2] = xe[slot::2]
        y[offset::2] = _convolve_valid(upsampled, taps)[start:start + r]
    return y


def _rowfilter(x, taps):
    return np.swapaxes(_colfilter(np.swapaxes(x, 0, 1), taps), 0, 1)


def _rowdfilt(x, ha, hb):
    return np.swapaxes(_coldfilt(np.swapaxes(x, 0, 1), ha, hb), 0, 1)


def _rowifilt(x, ha, hb):
    return np.swapaxes(_colifilt(np.swapaxes(x, 0, 1), ha, hb), 0, 1)


def lowpass_decimate(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Lowpass filter and keep every second sample along axis 0.

    Output sample ``n`` is centred on input position ``2n + 0.5`` for even
    filters. Odd lengths are handled by the symmetric extension, giving
    ``ceil(r / 2)`` outputs.
    """
    r = x.shape[0]
    m = taps.size
    n_out = (r + 1) // 2
    positions = 2 * np.arange(n_out)[:, None] + m // 2 - np.arange(m)[None, :]
    index = np.rint(_reflect(positions.astype(np.float64), -0.5, r - 0.5)).astype(np.intp)
    out = np.zeros((n_out,) + x.shape[1:], dtype=np.result_type(x.dtype, np.float64))
    for p in range(m):
        out += taps[p] * x[index[:, p]]
    return out


# ---------------------------------------------------------------------------
# Quad <-> complex band formation
# ---------------------------------------------------------------------------

def _q2c(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split 2x2 blocks of the four tree combinations into two complex bands."""
    a = y[0::2, 0::2]
    b = y[0::2, 1::2]
    c = y[1::2, 0::2]
    d = y[1::2, 1::2]
    p = (a + 1j * b) / _SQRT2
    q = (d - 1j * c) / _SQRT2
    return p - q, p + q


def _c2q(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    p = (z1 + z2) / _SQRT2
    q = (z2 - z1) / _SQRT2
    y = np.empty((2 * z1.shape[0], 2 * z1.shape[1]) + z1.shape[2:], dtype=np.float64)
    y[0::2, 0::2] = p.real
    y[0::2, 1::2] = p.imag
    y[1::2, 0::2] = -q.imag
    y[1::2, 1::2] = q.real
    return y


def _stack_bands(lh: np.ndarray, hl: np.ndarray, hh: np.ndarray) -> np.ndarray:
    b0, b5 = _q2c(lh)
    b2, b3 = _q2c(hl)
    b1, b4 = _q2c(hh)
    return np.stack([b0, b1, b2, b3, b4, b5], axis=2)


def _unstack_bands(bands: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lh = _c2q(bands[:, :, 0], bands[:, :, 5])
    hl = _c2q(bands[:, :, 2], bands[:, :, 3])
    hh = _c2q(bands[:, :, 1], bands[:, :, 4])
    return lh, hl, hh


def _extend_to_multiple_of_4(x: np.ndarray, axis: int) -> np.ndarray:
    if x.shape[axis] % 4 == 0:
        return x
    x = np.swapaxes(x, 0, axis)
    x = np.concatenate([x[:1], x, x[-1:]], axis=0)
    return np.swapaxes(x, 0, axis)


# ---------------------------------------------------------------------------
# 2D transform
# ---------------------------------------------------------------------------

def _check_input(x: np.ndarray, levels: int, spatial_dims: int) -> None:
    if levels < 1:
        raise TransformError(f"levels must be >= 1, got {levels}")
    if x.ndim < spatial_dims:
        raise TransformError(f"Expected at least {spatial_dims} dimensions, got shape {x.shape}")
    smallest = min(x.shape[:spatial_dims])
    if smallest < 2 ** levels:
        raise TransformError(
            f"Input of size {x.shape[:spatial_dims]} too small for {levels} levels "
            f"(needs >= {2 ** levels} samples per axis)"
        )
    if not np.all(np.isfinite(x)):
        raise TransformError("Input contains non-finite values")


def forward(image: np.ndarray, levels: int, filters: Optional[FilterSet] = None) -> DtcwtPyramid:
    """Forward 2D transform of ``image`` with shape ``(h, w, *batch)``."""
    filters = filters or load_default_filters()
    x = np.asarray(image, dtype=np.float64)
    _check_input(x, levels, 2)
    original_shape = x.shape[:2]

    if x.shape[0] % 2:
        x = np.concatenate([x, x[-1:]], axis=0)
    if x.shape[1] % 2:
        x = np.concatenate([x, x[:, -1:]], axis=1)

    lo = _colfilter(x, filters.h0o)
    hi = _colfilter(x, filters.h1o)
    lolo = _rowfilter(lo, filters.h0o)
    highpasses = [_stack_bands(
        _rowfilter(hi, filters.h0o),
        _rowfilter(lo, filters.h1o),
        _rowfilter(hi, filters.h1o),
    )]

    for _ in range(2, levels + 1):
        lolo = _extend_to_multiple_of_4(_extend_to_multiple_of_4(lolo, 0), 1)
        lo = _coldfilt(lolo, filters.h0b, filters.h0a)
        hi = _coldfilt(lolo, filters.h1b, filters.h1a)
        lolo = _rowdfilt(lo, filters.h0b, filters.h0a)
        highpasses.append(_stack_bands(
            _rowdfilt(hi, filters.h0b, filters.h0a),
            _rowdfilt(lo, filters.h1b, filters.h1a),
            _rowdfilt(hi, filters.h1b, filters.h1a),
        ))

    return DtcwtPyramid(lowpass=lolo, highpasses=tuple(highpasses), original_shape=tuple(original_shape))


def inverse(pyramid: DtcwtPyramid, filters: Optional[FilterSet] = None) -> np.ndarray:
    """Reconstruct the image a pyramid was computed from."""
    filters = filters or load_default_filters()
    highpasses = pyramid.highpasses
    if not highpasses:
        raise TransformError("Pyramid has no levels")
    z = np.asarray(pyramid.lowpass, dtype=np.float64)

    for level in range(len(highpasses), 0, -1):
        bands = highpasses[level - 1]
        if bands.ndim < 3 or bands.shape[2] != 6:
            raise TransformError(f"Level {level} must hold 6 oriented bands, got shape {bands.shape}")
        expected = (2 * bands.shape[0], 2 * bands.shape[1]) + bands.shape[3:]
        if z.shape != expected:
            raise TransformError(f"Level {level}: lowpass shape {z.shape} does not match subbands {bands.shape}")
        lh, hl, hh = _unstack_bands(bands)

        if level > 1:
            low_cols = _rowifilt(z, filters.g0b, filters.g0a) + _rowifilt(hl, filters.g1b, filters.g1a)
            high_cols = _rowifilt(lh, filters.g0b, filters.g0a) + _rowifilt(hh, filters.g1b, filters.g1a)
            z = _colifilt(low_cols, filters.g0b, filters.g0a) + _colifilt(high_cols, filters.g1b, filters.g1a)

            finer = highpasses[level - 2]
            if z.shape[0] != 2 * finer.shape[0]:
                z = z[1:-1]
            if z.shape[1] != 2 * finer.shape[1]:
                z = z[:, 1:-1]
        else:
            low_cols = _rowfilter(z, filters.g0o) + _rowfilter(hl, filters.g1o)
            high_cols = _rowfilter(lh, filters.g0o) + _rowfilter(hh, filters.g1o)
            z = _colfilter(low_cols, filters.g0o) + _colfilter(high_cols, filters.g1o)

    height, width = pyramid.original_shape[:2]
    return z[:height, :width]


# ---------------------------------------------------------------------------
# 1D transform
# ---------------------------------------------------------------------------

def _to_complex(hi: np.ndarray) -> np.ndarray:
    return hi[0::2] + 1j * hi[1::2]


def _from_complex(detail: np.ndarray) -> np.ndarray:
    hi = np.empty((2 * detail.shape[0],) + detail.shape[1:], dtype=np.float64)
    hi[0::2] = detail.real
    hi[1::2] = detail.imag
    return hi


def decompose_1d(sequence: np.ndarray, levels: int, filters: Optional[FilterSet] = None) -> DtcwtPyramid:
    """Dual-tree analysis of a 1D sequence (axis 0; trailing axes are batched)."""
    filters = filters or load_default_filters()
    x = np.asarray(sequence, dtype=np.float64)
    _check_input(x, levels, 1)
    original_length = x.shape[0]
    if original_length % 2:
        x = np.concatenate([x, x[-1:]], axis=0)

    lo = _colfilter(x, filters.h0o)
    details: List[np.ndarray] = [_to_complex(_colfilter(x, filters.h1o))]
    for _ in range(2, levels + 1):
        lo = _extend_to_multiple_of_4(lo, 0)
        details.append(_to_complex(_coldfilt(lo, filters.h1b, filters.h1a)))
        lo = _coldfilt(lo, filters.h0b, filters.h0a)

    return DtcwtPyramid(lowpass=lo, highpasses=tuple(details), original_shape=(original_length,))


def reconstruct_1d(pyramid: DtcwtPyramid, filters: Optional[FilterSet] = None) -> np.ndarray:
    """Inverse of :func:`decompose_1d`."""
    filters = filters or load_default_filters()
    details = pyramid.highpasses
    lo = np.asarray(pyramid.lowpass, dtype=np.float64)

    for level in range(len(details), 1, -1):
        hi = _from_complex(details[level - 1])
        if hi.shape != lo.shape:
            raise TransformError(f"Level {level}: lowpass length {lo.shape} does not match detail {hi.shape}")
        lo = _colifilt(lo, filters.g0b, filters.g0a) + _colifilt(hi, filters.g1b, filters.g1a)
        if lo.shape[0] != 2 * details[level - 2].shape[0]:
            lo = lo[1:-1]

    hi = _from_complex(details[0])
    if hi.shape != lo.shape:
        raise TransformError(f"Level 1: lowpass length {lo.shape} does not match detail {hi.shape}")
    x = _colfilter(lo, filters.g0o) + _colfilter(hi, filters.g1o)
    return x[:pyramid.original_shape[0]]


class TransformError(DataError):
    """Exception raised when a signal or pyramid cannot be transformed."""
    pass

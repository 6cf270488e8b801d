"""
Artifact persistence: feature stores, selection files, SVM models.

Binary layouts are little-endian and versioned; see docs/formats.md.
Every writer goes through ``atomic_write`` so an interrupted run never
leaves a partial artifact behind.
"""

import contextlib
import hashlib
import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Dict, Iterator, List, Optional, Union

import numpy as np
import yaml

from .errors import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

STORE_MAGIC = b"SCTR"
STORE_VERSION = 1
STORE_HEADER = struct.Struct("<4sHH32sQQQ")
FLAG_LOGGED = 0x1

MODEL_MAGIC = b"GSVM"
MODEL_VERSION = 1
MODEL_HEADER = struct.Struct("<4sHHddII")
MODEL_CLASS_HEADER = struct.Struct("<iIQdB7x")

SELECTION_HEADER = "# dtscat selection v1"


@contextlib.contextmanager
def atomic_write(path: PathLike, mode: str = "wb") -> Iterator[IO[Any]]:
    """Open a temporary file beside ``path`` and move it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, mode) as f:
            yield f
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp_name)
        raise


def compute_sha256(content: bytes) -> str:
    """SHA-256 hex digest of ``content``."""
    return hashlib.sha256(content).hexdigest()


def file_sha256(path: PathLike, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_exact(f: IO[bytes], size: int, what: str, path: PathLike) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise StoreError(f"{path}: truncated {what} (expected {size} bytes, got {len(data)})")
    return data


# ---------------------------------------------------------------------------
# Feature stores
# ---------------------------------------------------------------------------

@dataclass
class FeatureStore:
    """Feature matrix with labels and descriptors, as read from disk."""
    features: np.ndarray
    labels: np.ndarray
    index_map: np.ndarray
    config_hash: str
    logged: bool
    version: int = STORE_VERSION
    path: Optional[Path] = None

    @property
    def rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def vector_length(self) -> int:
        return int(self.features.shape[1])


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".yaml")


def write_feature_store(
    path: PathLike,
    features: np.ndarray,
    labels: np.ndarray,
    index_map: np.ndarray,
    config_hash: str,
    logged: bool,
    sidecar: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write an SCTR feature store and, when given, its YAML sidecar."""
    from .scatternet import INDEX_DTYPE

    path = Path(path)
    matrix = np.ascontiguousarray(features, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<i4")
    index_map = np.ascontiguousarray(index_map, dtype=INDEX_DTYPE)
    if matrix.ndim != 2:
        raise StoreError(f"Feature matrix must be 2D, got shape {matrix.shape}")
    rows, length = matrix.shape
    if labels.shape != (rows,):
        raise StoreError(f"Expected {rows} labels, got shape {labels.shape}")
    if index_map.shape != (length,):
        raise StoreError(f"Index map has {index_map.size} entries for vector length {length}")
    try:
        digest = bytes.fromhex(config_hash)
    except ValueError:
        raise StoreError(f"Config hash is not hex: {config_hash!r}")
    if len(digest) != 32:
        raise StoreError("Config hash must be a SHA-256 digest")

    index_bytes = index_map.tobytes()
    header = STORE_HEADER.pack(
        STORE_MAGIC, STORE_VERSION, FLAG_LOGGED if logged else 0, digest, length, rows, len(index_bytes)
    )
    with atomic_write(path, "wb") as f:
        f.write(header)
        f.write(matrix.tobytes())
        f.write(index_bytes)
        f.write(labels.tobytes())

    if sidecar is not None:
        with atomic_write(sidecar_path(path), "w") as f:
            f.write(yaml.safe_dump(sidecar, sort_keys=False))
    logger.info(f"Wrote feature store {path} ({rows} x {length})")
    return path


def read_feature_store(path: PathLike, mmap: bool = True) -> FeatureStore:
    """Read an SCTR feature store; feature rows are memory-mapped by default."""
    from .scatternet import INDEX_DTYPE

    path = Path(path)
    try:
        size = path.stat().st_size
        with open(path, "rb") as f:
            magic, version, flags, digest, length, rows, index_len = STORE_HEADER.unpack(
                _read_exact(f, STORE_HEADER.size, "header", path)
            )
            if magic != STORE_MAGIC:
                raise StoreError(f"{path}: not a feature store (magic {magic!r})")
            if version != STORE_VERSION:
                raise StoreError(f"{path}: unsupported store version {version} (expected {STORE_VERSION})")
            if index_len != length * INDEX_DTYPE.itemsize:
                raise StoreError(f"{path}: index map of {index_len} bytes does not fit vector length {length}")
            features_offset = STORE_HEADER.size
            index_offset = features_offset + rows * length * 4
            labels_offset = index_offset + index_len
            expected = labels_offset + rows * 4
            if size != expected:
                raise StoreError(f"{path}: length mismatch (expected {expected} bytes, found {size})")
            f.seek(index_offset)
            index_map = np.frombuffer(_read_exact(f, index_len, "index map", path), dtype=INDEX_DTYPE).copy()
            labels = np.frombuffer(_read_exact(f, rows * 4, "labels", path), dtype="<i4").astype(np.int64)
    except OSError as e:
        logger.error(f"Failed to read feature store {path}: {e}")
        raise StoreError(f"Cannot read feature store {path}: {e}")

    if mmap and rows and length:
        features = np.memmap(path, dtype="<f4", mode="r", offset=features_offset, shape=(rows, length))
    else:
        with open(path, "rb") as f:
            f.seek(features_offset)
            raw = f.read(rows * length * 4)
        features = np.frombuffer(raw, dtype="<f4").reshape(rows, length).copy()

    return FeatureStore(
        features=features,
        labels=labels,
        index_map=index_map,
        config_hash=digest.hex(),
        logged=bool(flags & FLAG_LOGGED),
        version=version,
        path=path,
    )


def write_pyramid_dump(path: PathLike, pyramid, config_hash: str) -> Path:
    """Store one pyramid's subbands as a 2-row feature store (real, imaginary)."""
    from .scatternet import INDEX_DTYPE

    blocks, real, imag = [], [], []
    for level, bands in enumerate(pyramid.highpasses, start=1):
        bands = bands if bands.ndim > 3 else bands[..., None]
        h, w, n_bands, channels = bands.shape[0], bands.shape[1], bands.shape[2], int(np.prod(bands.shape[3:]))
        values = bands.reshape(h, w, n_bands, channels)
        band, row, col, channel = np.meshgrid(
            np.arange(n_bands), np.arange(h), np.arange(w), np.arange(channels), indexing="ij"
        )
        block = np.zeros(band.size, dtype=INDEX_DTYPE)
        block["layer"] = 1
        block["j1"] = level
        block["j2"] = -1
        block["r1"] = band.ravel()
        block["r2"] = -1
        block["row"] = row.ravel()
        block["col"] = col.ravel()
        block["channel"] = channel.ravel()
        blocks.append(block)
        ordered = np.moveaxis(values, 2, 0).ravel()
        real.append(ordered.real)
        imag.append(ordered.imag)

    matrix = np.stack([np.concatenate(real), np.concatenate(imag)])
    return write_feature_store(
        path, matrix, np.zeros(2, dtype=np.int32), np.concatenate(blocks), config_hash, logged=False
    )


# ---------------------------------------------------------------------------
# Normalization statistics
# ---------------------------------------------------------------------------

def stats_path(selection_path: PathLike) -> Path:
    path = Path(selection_path)
    return path.with_name(path.name + ".stats.npz")


def save_stats(path: PathLike, stats) -> Path:
    with atomic_write(path, "wb") as f:
        np.savez(f, mean=stats.mean, std=stats.std, floor=np.float64(stats.floor))
    return Path(path)


def load_stats(path: PathLike):
    from .scatternet import FeatureStats

    try:
        with np.load(path) as data:
            return FeatureStats(mean=data["mean"], std=data["std"], floor=float(data["floor"]))
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"Failed to read statistics {path}: {e}")
        raise StoreError(f"Cannot read normalization statistics {path}: {e}")


# ---------------------------------------------------------------------------
# Selection files
# ---------------------------------------------------------------------------

def _format_indices(indices) -> str:
    return " ".join(str(int(i)) for i in indices)


def write_selection(path: PathLike, selection) -> Path:
    """Write an OlsSelection as text: one line per (block, class) plus the union."""
    lines = [SELECTION_HEADER, f"# vector_length {selection.vector_length}"]
    for entry in selection.classes:
        flag = " exhausted" if entry.exhausted else ""
        lines.append(
            f"class {entry.class_id} block {entry.block} : {_format_indices(entry.indices)}"
            f" ; rss={entry.final_rss!r}{flag}"
        )
    lines.append(f"union : {_format_indices(selection.union)}")
    with atomic_write(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Wrote selection {path} ({selection.union.size} dimensions)")
    return Path(path)


def _parse_indices(text: str, path: PathLike, lineno: int) -> np.ndarray:
    try:
        return np.array([int(token) for token in text.split()], dtype=np.int64)
    except ValueError:
        raise StoreError(f"{path}:{lineno}: malformed index list")


def read_selection(path: PathLike):
    from .featsel import OlsClassSelection, OlsSelection

    try:
        with open(path, "r") as f:
            lines = f.read().splitlines()
    except OSError as e:
        logger.error(f"Failed to read selection {path}: {e}")
        raise StoreError(f"Cannot read selection file {path}: {e}")
    if not lines or lines[0].strip() != SELECTION_HEADER:
        raise StoreError(f"{path}: not a selection file (expected '{SELECTION_HEADER}')")

    vector_length: Optional[int] = None
    entries: List[OlsClassSelection] = []
    union: Optional[np.ndarray] = None
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("# vector_length"):
            vector_length = int(line.split()[-1])
        elif line.startswith("#"):
            continue
        elif line.startswith("class "):
            head, _, rest = line.partition(" : ")
            body, _, tail = rest.partition(" ; ")
            fields = head.split()
            tail_fields = tail.split()
            if len(fields) != 4 or fields[2] != "block" or not tail_fields or not tail_fields[0].startswith("rss="):
                raise StoreError(f"{path}:{lineno}: malformed class line")
            entries.append(OlsClassSelection(
                class_id=int(fields[1]),
                indices=_parse_indices(body, path, lineno),
                rss_history=np.array([float(tail_fields[0][4:])]),
                exhausted="exhausted" in tail_fields[1:],
                block=int(fields[3]),
            ))
        elif line.startswith("union"):
            union = _parse_indices(line.partition(":")[2], path, lineno)
        else:
            raise StoreError(f"{path}:{lineno}: unrecognized line")

    if vector_length is None or union is None:
        raise StoreError(f"{path}: missing vector_length or union line")
    return OlsSelection.from_entries(entries, vector_length, union=union)


# ---------------------------------------------------------------------------
# SVM models
# ---------------------------------------------------------------------------

def write_model(path: PathLike, model) -> Path:
    """Write an SvmModel as a GSVM container."""
    with atomic_write(path, "wb") as f:
        f.write(MODEL_HEADER.pack(
            MODEL_MAGIC, MODEL_VERSION, 0, model.gamma, model.c, model.dimension, len(model.machines)
        ))
        for machine in model.machines:
            vectors = np.ascontiguousarray(machine.support_vectors, dtype="<f4")
            coef = np.ascontiguousarray(machine.coef, dtype="<f8")
            f.write(MODEL_CLASS_HEADER.pack(
                machine.class_id, coef.size, machine.iterations, machine.bias, int(machine.converged)
            ))
            f.write(vectors.tobytes())
            f.write(coef.tobytes())
    logger.info(f"Wrote model {path} ({len(model.machines)} classes)")
    return Path(path)


def read_model(path: PathLike):
    from .classify import BinarySvm, SvmModel

    try:
        with open(path, "rb") as f:
            magic, version, _, gamma, c, dimension, class_count = MODEL_HEADER.unpack(
                _read_exact(f, MODEL_HEADER.size, "header", path)
            )
            if magic != MODEL_MAGIC:
                raise StoreError(f"{path}: not a model file (magic {magic!r})")
            if version != MODEL_VERSION:
                raise StoreError(f"{path}: unsupported model version {version} (expected {MODEL_VERSION})")
            machines = []
            for _ in range(class_count):
                class_id, n_sv, iterations, bias, converged = MODEL_CLASS_HEADER.unpack(
                    _read_exact(f, MODEL_CLASS_HEADER.size, "class header", path)
                )
                vectors = np.frombuffer(
                    _read_exact(f, n_sv * dimension * 4, "support vectors", path), dtype="<f4"
                ).reshape(n_sv, dimension).copy()
                coef = np.frombuffer(_read_exact(f, n_sv * 8, "coefficients", path), dtype="<f8").copy()
                machines.append(BinarySvm(
                    class_id=class_id, support_vectors=vectors, coef=coef, bias=bias,
                    converged=bool(converged), iterations=iterations,
                ))
            if f.read(1):
                raise StoreError(f"{path}: trailing bytes after {class_count} class blocks")
    except OSError as e:
        logger.error(f"Failed to read model {path}: {e}")
        raise StoreError(f"Cannot read model file {path}: {e}")
    return SvmModel(gamma=gamma, c=c, dimension=dimension, machines=machines)


class StoreError(DataError):
    """Exception raised for unreadable or inconsistent artifact files."""
    pass

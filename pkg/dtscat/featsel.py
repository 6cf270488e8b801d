"""
Greedy orthogonal least squares feature selection.

For each class a 0/1 indicator target is regressed on the feature columns
and columns are added one at a time, each time choosing the column whose
inclusion most reduces the residual sum of squares. Candidates are scored
against the residual after implicit Gram-Schmidt orthogonalization against
the selected subspace, so one step costs one pass over the remaining
columns. Target and columns are centered, which is equivalent to fitting
an intercept.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NumericalError

logger = logging.getLogger(__name__)

SCORE_TOLERANCE = 1e-12
COLLINEAR_TOLERANCE = 1e-10
# refresh the downdated norm once it has lost this fraction of its energy
REORTHOGONALIZE_BELOW = 1e-6


@dataclass
class OlsClassSelection:
    """Ordered selection for one class (within one column block)."""
    class_id: int
    indices: np.ndarray
    rss_history: np.ndarray
    exhausted: bool = False
    block: int = 0

    @property
    def final_rss(self) -> float:
        return float(self.rss_history[-1])

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class OlsSelection:
    """Per-class selections plus their deduplicated union."""
    classes: List[OlsClassSelection]
    union: np.ndarray
    vector_length: int
    provenance: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    @classmethod
    def from_entries(
        cls,
        entries: Sequence[OlsClassSelection],
        vector_length: int,
        union: Optional[np.ndarray] = None,
    ) -> "OlsSelection":
        """Build the union by first appearance over ``entries`` in order."""
        provenance: Dict[int, List[int]] = {}
        for entry in entries:
            for index in entry.indices.tolist():
                owners = provenance.setdefault(index, [])
                if entry.class_id not in owners:
                    owners.append(entry.class_id)
        if union is None:
            union = np.fromiter(provenance.keys(), dtype=np.int64, count=len(provenance))
        return cls(
            classes=list(entries),
            union=np.asarray(union, dtype=np.int64),
            vector_length=vector_length,
            provenance={k: tuple(v) for k, v in provenance.items()},
        )

    def class_indices(self, class_id: int) -> np.ndarray:
        parts = [e.indices for e in self.classes if e.class_id == class_id]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def feature_richness(self, columns: Optional[np.ndarray] = None) -> float:
        """Selected fraction of all columns, or of ``columns`` when given."""
        if columns is None:
            return self.union.size / self.vector_length if self.vector_length else 0.0
        columns = np.asarray(columns)
        if columns.size == 0:
            return 0.0
        return np.intersect1d(self.union, columns).size / columns.size

    @property
    def exhausted(self) -> bool:
        return any(e.exhausted for e in self.classes)


def indicator_target(labels: np.ndarray, class_id: int) -> np.ndarray:
    """1 for rows of ``class_id``, else 0."""
    target = (np.asarray(labels) == class_id).astype(np.float64)
    if target.all() or not target.any():
        raise SelectionError(f"Indicator for class {class_id} needs both positive and negative rows")
    return target


def _center(features: np.ndarray) -> np.ndarray:
    matrix = np.asarray(features, dtype=np.float64)
    return matrix - matrix.mean(axis=0)


def ols_select(
    features: np.ndarray,
    target: np.ndarray,
    count: int,
    class_id: int = 0,
    centered: bool = False,
) -> OlsClassSelection:
    """Select ``count`` columns of ``features`` for regressing ``target``.

    Ties go to the lowest column index. When no remaining column reduces
    the residual by more than the tolerance, the partial selection is
    returned with ``exhausted`` set.
    """
    X = np.asarray(features, dtype=np.float64) if centered else _center(features)
    if X.ndim != 2:
        raise SelectionError(f"Feature matrix must be 2D, got shape {X.shape}")
    rows, dims = X.shape
    y = np.asarray(target, dtype=np.float64).ravel()
    if y.size != rows:
        raise SelectionError(f"Target has {y.size} rows, features have {rows}")
    if count < 0 or count > dims:
        raise SelectionError(f"Cannot select {count} of {dims} columns")
    if count >= rows:
        raise SelectionError(f"Selection count {count} must be below the row count {rows}")

    residual = y - y.mean()
    rss = [float(residual @ residual)]
    original_sq = np.einsum("ij,ij->j", X, X)
    norms_sq = original_sq.copy()
    correlation = X.T @ residual
    active = original_sq > 0
    basis = np.empty((rows, count))
    chosen: List[int] = []
    exhausted = False

    for step in range(count):
        usable = active & (norms_sq > COLLINEAR_TOLERANCE ** 2 * original_sq)
        score = np.full(dims, -np.inf)
        score[usable] = correlation[usable] ** 2 / norms_sq[usable]
        best = int(np.argmax(score))
        if not np.isfinite(score[best]) or score[best] <= SCORE_TOLERANCE:
            exhausted = True
            logger.warning(
                f"Class {class_id}: no column reduces the residual after {step} of {count} selections"
            )
            break

        Q = basis[:, :step]
        q = X[:, best] - Q @ (Q.T @ X[:, best])
        q -= Q @ (Q.T @ q)
        q /= np.linalg.norm(q)
        basis[:, step] = q
        chosen.append(best)
        active[best] = False

        p = X.T @ q
        weight = q @ residual
        residual = residual - weight * q
        correlation -= weight * p
        norms_sq -= p ** 2
        rss.append(float(residual @ residual))

        stale = active & (norms_sq < REORTHOGONALIZE_BELOW * original_sq)
        if stale.any():
            Q = basis[:, :step + 1]
            cols = X[:, stale]
            projected = cols - Q @ (Q.T @ cols)
            norms_sq[stale] = np.einsum("ij,ij->j", projected, projected)

    logger.debug(f"Class {class_id}: selected {len(chosen)} columns, rss {rss[0]:.4g} -> {rss[-1]:.4g}")
    return OlsClassSelection(
        class_id=class_id,
        indices=np.array(chosen, dtype=np.int64),
        rss_history=np.array(rss),
        exhausted=exhausted,
    )


def select_all_classes(
    features: np.ndarray,
    labels: np.ndarray,
    per_class_count: int,
    columns: Optional[np.ndarray] = None,
    block: int = 0,
    workers: Optional[int] = None,
) -> OlsSelection:
    """Run one-versus-all OLS for every class present in ``labels``.

    With ``columns`` the search is restricted to that column block and the
    returned indices refer to the full matrix.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise SelectionError(f"Selection needs at least 2 classes, found {classes.size}")
    matrix = np.asarray(features)
    vector_length = matrix.shape[1]
    if columns is not None:
        columns = np.asarray(columns, dtype=np.int64)
        matrix = matrix[:, columns]
    X = _center(matrix)

    def run(class_id: int) -> OlsClassSelection:
        return ols_select(X, indicator_target(labels, class_id), per_class_count, int(class_id), centered=True)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        entries = list(pool.map(run, classes.tolist()))

    for entry in entries:
        entry.block = block
        if columns is not None:
            entry.indices = columns[entry.indices]
    selection = OlsSelection.from_entries(entries, vector_length)
    logger.info(
        f"Selected {selection.union.size} distinct columns for {classes.size} classes "
        f"({per_class_count} per class)"
    )
    return selection


def merge_selections(selections: Sequence[OlsSelection]) -> OlsSelection:
    """Combine per-block selections over the same vector into one."""
    if not selections:
        raise SelectionError("Nothing to merge")
    lengths = {s.vector_length for s in selections}
    if len(lengths) != 1:
        raise SelectionError(f"Selections cover different vector lengths: {sorted(lengths)}")
    entries = [entry for s in selections for entry in s.classes]
    return OlsSelection.from_entries(entries, lengths.pop())


def apply_selection(features: np.ndarray, selection: OlsSelection) -> np.ndarray:
    """Columns of ``features`` in union order."""
    width = np.shape(features)[1]
    union = selection.union
    if union.size and (union.min() < 0 or union.max() >= width):
        raise SelectionError(f"Selection index {int(union.max())} out of range for {width} columns")
    return np.asarray(features)[:, union]


class SelectionError(NumericalError):
    """Exception raised when a feature selection cannot be computed or applied."""
    pass

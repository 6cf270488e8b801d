"""
One-versus-all Gaussian-kernel SVM.

Each binary problem is solved with SMO using the maximal violating pair
working set and an LRU cache of kernel rows. Cross-validation picks
``(c, gamma)`` from a grid with stratified folds.
"""

import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.model_selection import LeaveOneOut, StratifiedKFold

from .errors import NumericalError

logger = logging.getLogger(__name__)

DEFAULT_C = 14.0
DEFAULT_GAMMA = 2e-5
DEFAULT_TOL = 1e-3
DEFAULT_MAX_KERNEL_EVALS = 10 ** 7
DEFAULT_CACHE_MB = 256
TAU = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma * ||a_i - b_j||^2)`` for every row pair."""
    return np.exp(-gamma * cdist(np.atleast_2d(a), np.atleast_2d(b), "sqeuclidean"))


class KernelCache:
    """Kernel rows of a training matrix, computed on demand and evicted LRU."""

    def __init__(self, features: np.ndarray, gamma: float, budget_bytes: int, gram: Optional[np.ndarray] = None):
        self.features = features
        self.gamma = gamma
        self.gram = gram
        self.rows = features.shape[0]
        self.capacity = max(2, budget_bytes // max(1, 8 * self.rows))
        self.evaluations = 0
        self._sq_norms = np.einsum("ij,ij->i", features, features)
        self._rows: "OrderedDict[int, np.ndarray]" = OrderedDict()

    def row(self, i: int) -> np.ndarray:
        if self.gram is not None:
            return self.gram[i]
        cached = self._rows.get(i)
        if cached is not None:
            self._rows.move_to_end(i)
            return cached
        distances = self._sq_norms + self._sq_norms[i] - 2.0 * (self.features @ self.features[i])
        values = np.exp(-self.gamma * np.maximum(distances, 0.0))
        values[i] = 1.0
        self.evaluations += self.rows
        self._rows[i] = values
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return values


@dataclass
class BinarySolution:
    alpha: np.ndarray
    rho: float
    converged: bool
    iterations: int
    kernel_evaluations: int


def _compute_rho(alpha: np.ndarray, y: np.ndarray, G: np.ndarray, c: float) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(yG[free].mean())
    at_upper = alpha >= c
    # bounds on rho from variables stuck at either box edge
    ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub) or not np.isfinite(lb):
        return float(ub if np.isfinite(ub) else lb)
    return float((ub + lb) / 2)


def solve_binary(
    cache: KernelCache,
    y: np.ndarray,
    c: float,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    max_kernel_evals: int = DEFAULT_MAX_KERNEL_EVALS,
) -> BinarySolution:
    """SMO on the dual of the soft-margin SVM with labels ``y`` in {-1, +1}."""
    n = y.size
    max_iter = max_iter if max_iter is not None else max(10_000_000, 100 * n)
    alpha = np.zeros(n)
    G = -np.ones(n)
    converged = False
    iterations = 0

    while iterations < max_iter:
        if cache.evaluations > max_kernel_evals:
            break
        violation = -y * G
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(violation[up])])
        j = int(np.flatnonzero(low)[np.argmin(violation[low])])
        if violation[i] - violation[j] < tol:
            converged = True
            break

        Q_i = y[i] * y * cache.row(i)
        Q_j = y[j] * y * cache.row(j)
        old_i, old_j = alpha[i], alpha[j]

        if y[i] != y[j]:
            quad = max(Q_i[i] + Q_j[j] + 2 * Q_i[j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = old_i - old_j
            a_i, a_j = old_i + delta, old_j + delta
            if diff > 0:
                if a_j < 0:
                    a_j, a_i = 0.0, diff
            elif a_i < 0:
                a_i, a_j = 0.0, -diff
            if diff > 0:
                if a_i > c:
                    a_i, a_j = c, c - diff
            elif a_j > c:
                a_j, a_i = c, c + diff
        else:
            quad = max(Q_i[i] + Q_j[j] - 2 * Q_i[j], TAU)
            delta = (G[i] - G[j]) / quad
            total = old_i + old_j
            a_i, a_j = old_i - delta, old_j + delta
            if total > c:
                if a_i > c:
                    a_i, a_j = c, total - c
            elif a_j < 0:
                a_j, a_i = 0.0, total
            if total > c:
                if a_j > c:
                    a_j, a_i = c, total - c
            elif a_i < 0:
                a_i, a_j = 0.0, total

        alpha[i], alpha[j] = a_i, a_j
        G += Q_i * (a_i - old_i) + Q_j * (a_j - old_j)
        iterations += 1

    if not converged:
        logger.warning(
            f"SMO stopped before convergence after {iterations} iterations "
            f"and {cache.evaluations} kernel evaluations"
        )
    return BinarySolution(
        alpha=alpha,
        rho=_compute_rho(alpha, y, G, c),
        converged=converged,
        iterations=iterations,
        kernel_evaluations=cache.evaluations,
    )


@dataclass
class BinarySvm:
    """Decision function ``sum(coef * K(sv, x)) + bias`` for one class."""
    class_id: int
    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    converged: bool = True
    iterations: int = 0

    def decision(self, rows: np.ndarray, gamma: float) -> np.ndarray:
        if self.coef.size == 0:
            return np.full(rows.shape[0], self.bias)
        kernel = rbf_kernel(rows, self.support_vectors.astype(np.float64), gamma)
        return kernel @ self.coef + self.bias


@dataclass
class SvmModel:
    gamma: float
    c: float
    dimension: int
    machines: List[BinarySvm] = field(default_factory=list)

    @property
    def classes(self) -> np.ndarray:
        return np.array([m.class_id for m in self.machines], dtype=np.int64)

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.machines)

    def decision_function(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.dimension:
            raise SvmError(f"Rows of width {rows.shape[-1]} do not match model dimension {self.dimension}")
        return np.column_stack([m.decision(rows, self.gamma) for m in self.machines])


def train(
    features: np.ndarray,
    labels: np.ndarray,
    c: float = DEFAULT_C,
    gamma: float = DEFAULT_GAMMA,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    max_kernel_evals: int = DEFAULT_MAX_KERNEL_EVALS,
    cache_mb: int = DEFAULT_CACHE_MB,
    workers: Optional[int] = None,
) -> SvmModel:
    """Train one binary SVM per class (class versus rest)."""
    if not (c > 0 and gamma > 0):
        raise SvmError(f"c and gamma must be positive, got c={c}, gamma={gamma}")
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != labels.size:
        raise SvmError(f"Feature matrix {X.shape} does not match {labels.size} labels")
    if not np.all(np.isfinite(X)):
        raise SvmError("Training rows contain non-finite values")
    classes = np.unique(labels)
    if classes.size < 2:
        raise SvmError(f"Training needs at least 2 classes, found {classes.size}")

    budget = cache_mb * 1024 * 1024
    n = X.shape[0]
    # a full Gram matrix that fits the budget is shared by every binary problem
    gram = rbf_kernel(X, X, gamma) if n * n * 8 <= budget else None

    def fit(class_id: int) -> BinarySvm:
        y = np.where(labels == class_id, 1.0, -1.0)
        cache = KernelCache(X, gamma, budget // max(1, classes.size), gram=gram)
        solution = solve_binary(cache, y, c, tol, max_iter, max_kernel_evals)
        support = np.flatnonzero(solution.alpha > 0)
        logger.info(
            f"Class {class_id}: {support.size} support vectors, {solution.iterations} iterations"
            f"{'' if solution.converged else ' (not converged)'}"
        )
        return BinarySvm(
            class_id=int(class_id),
            support_vectors=X[support].astype(np.float32),
            coef=solution.alpha[support] * y[support],
            bias=-solution.rho,
            converged=solution.converged,
            iterations=solution.iterations,
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        machines = list(pool.map(fit, classes.tolist()))
    return SvmModel(gamma=gamma, c=c, dimension=X.shape[1], machines=machines)


def predict(model: SvmModel, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Class ids by decision-value argmax (lowest class on ties) and the decision values."""
    if not model.machines:
        raise SvmError("Model has no trained classes")
    values = model.decision_function(rows)
    return model.classes[np.argmax(values, axis=1)], values


def accuracy(predicted: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    return float(np.mean(np.asarray(predicted) == labels)) if labels.size else 0.0


@dataclass
class CrossValidationResult:
    best_c: float
    best_gamma: float
    best_accuracy: float
    c_grid: List[float]
    gamma_grid: List[float]
    scores: np.ndarray

    def cells(self) -> List[Dict[str, float]]:
        return [
            {"c": c, "gamma": g, "accuracy": float(self.scores[a, b])}
            for a, c in enumerate(self.c_grid)
            for b, g in enumerate(self.gamma_grid)
        ]


def cross_validate(
    features: np.ndarray,
    labels: np.ndarray,
    c_grid: Sequence[float],
    gamma_grid: Sequence[float],
    folds: int = 5,
    seed: int = 0,
    **train_options,
) -> CrossValidationResult:
    """Mean fold accuracy for every ``(c, gamma)``; ties favour smaller c, then smaller gamma."""
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if folds < 2:
        raise SvmError(f"Cross-validation needs at least 2 folds, got {folds}")
    if not c_grid or not gamma_grid:
        raise SvmError("Both c and gamma grids must be nonempty")
    if folds == labels.size:
        splitter = LeaveOneOut()
    else:
        counts = np.bincount(np.unique(labels, return_inverse=True)[1])
        if counts.min() < folds:
            raise SvmError(f"A class has {counts.min()} rows, fewer than {folds} folds")
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    splits = list(splitter.split(X, labels))

    c_values = sorted(float(c) for c in c_grid)
    gamma_values = sorted(float(g) for g in gamma_grid)
    scores = np.zeros((len(c_values), len(gamma_values)))
    for a, c in enumerate(c_values):
        for b, gamma in enumerate(gamma_values):
            fold_scores = []
            for train_rows, test_rows in splits:
                model = train(X[train_rows], labels[train_rows], c=c, gamma=gamma, **train_options)
                predicted, _ = predict(model, X[test_rows])
                fold_scores.append(accuracy(predicted, labels[test_rows]))
            scores[a, b] = np.mean(fold_scores)
            logger.info(f"CV c={c:g} gamma={gamma:g}: accuracy {scores[a, b]:.4f}")

    # argmax over the flattened grid keeps the first (smallest c, then gamma) maximum
    best = np.unravel_index(int(np.argmax(scores)), scores.shape)
    return CrossValidationResult(
        best_c=c_values[best[0]],
        best_gamma=gamma_values[best[1]],
        best_accuracy=float(scores[best]),
        c_grid=c_values,
        gamma_grid=gamma_values,
        scores=scores,
    )


class SvmError(NumericalError):
    """Exception raised for invalid SVM inputs or models."""
    pass

"""Representation-quality and accuracy metrics."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .errors import ContractError

log = logging.getLogger(__name__)


@dataclass
class ClusterAssignment:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    inertia_history: list = field(default_factory=list)
    iterations: int = 0


@dataclass
class ReprReport:
    adjR: float
    standard_ari: float
    hoyer_mean: float
    hoyer_raw: float
    test_error: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def _sqdist(X, C):
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _kmeans_pp(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = _sqdist(X, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, _sqdist(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(X, centers, max_iter):
    k = len(centers)
    history = []
    assign = None
    it = 0
    for it in range(1, max_iter + 1):
        d = _sqdist(X, centers)
        new_assign = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(X)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        occupied = counts > 0
        centers = centers.copy()
        centers[occupied] = sums[occupied] / counts[occupied, None]
        if not occupied.all():
            # reseed each empty cluster at the point farthest from its centroid
            own = d[np.arange(len(X)), assign]
            taken = set()
            for c in np.flatnonzero(~occupied):
                for idx in np.argsort(-own, kind="stable"):
                    if idx not in taken:
                        taken.add(idx)
                        centers[c] = X[idx]
                        break
    assign = np.argmin(_sqdist(X, centers), axis=1)
    # direct differences avoid the cancellation in the expanded distance
    inertia = float(((X - centers[assign]) ** 2).sum())
    return ClusterAssignment(centers, assign, inertia, history, it)


def kmeans(Z, k=10, seed=0, n_init=5, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` restarts."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or len(Z) < k:
        raise ContractError(f"kmeans needs at least k={k} points, got {len(Z)}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        result = _lloyd(Z, _kmeans_pp(Z, k, rng), max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def contingency(a, b):
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def adj_r(assignment, labels):
    """Fraction of points in the best one-to-one cluster/label overlap.

    Clusters are matched to label classes by a maximum-weight bipartite
    matching on the contingency table; the score is the matched overlap
    divided by the number of points.
    """
    assignment = np.asarray(assignment)
    labels = np.asarray(labels)
    if len(assignment) != len(labels):
        raise ContractError("assignment and labels differ in length")
    if len(labels) == 0:
        raise ContractError("adjR of an empty set")
    table = contingency(assignment, labels)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / len(labels))


def standard_ari(a, b):
    """Adjusted Rand index (Hubert and Arabie) from the contingency table."""
    a, b = np.asarray(a), np.asarray(b)
    n = len(a)
    table = contingency(a, b)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(1), 2).sum()
    sum_b = comb(table.sum(0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial in the same way
        return 1.0 if sum_a == sum_b else 0.0
    return float((sum_cells - expected) / (max_index - expected))


def hoyer(z):
    """Hoyer sparseness in [0, 1]: 1 for one-hot vectors, 0 for flat ones."""
    z = np.asarray(z, dtype=np.float64)
    d = z.shape[-1]
    if d < 2:
        raise ContractError("hoyer needs at least two dimensions")
    ss = (z * z).sum(-1)
    l1 = np.abs(z).sum(-1)
    zero = ss == 0
    if np.any(zero):
        log.info("hoyer: %d zero vector(s) scored as fully sparse", int(np.sum(zero)))
    # |z|_1 / |z|_2 as sqrt(|z|_1^2 / |z|_2^2): exact for flat and one-hot vectors
    ratio = np.where(zero, 1.0, np.sqrt(l1 * l1 / np.where(zero, 1.0, ss)))
    h = (np.sqrt(d) - ratio) / (np.sqrt(d) - 1.0)
    h = np.clip(h, 0.0, 1.0)
    return float(h) if np.ndim(h) == 0 else h


def normalized_hoyer(Z, min_std=1e-12):
    """Mean Hoyer of rows after scaling each dimension to unit std."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or len(Z) < 2:
        raise ContractError("normalized_hoyer needs at least two rows")
    std = Z.std(axis=0)
    keep = std >= min_std
    if keep.sum() < 2:
        raise ContractError("fewer than two non-degenerate dimensions")
    return float(np.mean(hoyer(Z[:, keep] / std[keep])))


def test_error(model, dataset, samples=0, rng=None):
    """Percentage of misclassified examples."""
    if len(dataset) == 0:
        raise ContractError("empty test set")
    pred, _ = model.predict(dataset.images, samples=samples, rng=rng)
    return float(100.0 * np.mean(pred != dataset.labels))


def representation_report(model, dataset, k=10, seed=0, n_init=5, error=None):
    Z = model.represent(dataset.images)
    clusters = kmeans(Z, k=k, seed=seed, n_init=n_init)
    return ReprReport(
        adjR=adj_r(clusters.assignment, dataset.labels),
        standard_ari=standard_ari(clusters.assignment, dataset.labels),
        hoyer_mean=normalized_hoyer(Z),
        hoyer_raw=float(np.mean(hoyer(Z))),
        test_error=test_error(model, dataset) if error is None else error,
    )

"""Pairwise affinity and distance matrices between observations.

Rows of a data matrix are samples. Every builder returns an
:class:`AffinityMatrix` that is symmetric to the bit: the upper triangle is
computed and mirrored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

MODES = ("affinity", "distance")

# column block for the dot-product accumulation; keeps per-block sums short
BLOCK = 4096


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    values: np.ndarray
    mode: str = "affinity"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"affinity matrix must be square, got shape {v.shape}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not np.array_equal(v, v.T, equal_nan=True):
            raise ValueError("affinity matrix is not symmetric")
        if self.mode == "distance":
            if np.any(np.diag(v) != 0):
                raise ValueError("distance matrix must have a zero diagonal")
            if np.any(v < 0):
                raise ValueError("distance matrix has negative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def off_diagonal(self) -> np.ndarray:
        return self.values[~np.eye(self.n, dtype=bool)]

    def negative_fraction(self) -> float:
        if self.n < 2:
            return 0.0
        return float(np.mean(self.off_diagonal() < 0))


def as_data_matrix(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError(f"data matrix must be 2-D, got {y.ndim}-D")
    n, p = y.shape
    if n < 2 or p < 1:
        raise ValueError(f"data matrix needs n >= 2 and p >= 1, got {n} x {p}")
    bad = ~np.isfinite(y)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"non-finite entry at row {i}, column {j}")
    return y


def _mirror_upper(g: np.ndarray) -> np.ndarray:
    iu = np.triu_indices_from(g, k=1)
    g[(iu[1], iu[0])] = g[iu]
    return g


def gram(y: np.ndarray) -> np.ndarray:
    """``Y Y^T`` accumulated over column blocks, exactly symmetric."""
    n, p = y.shape
    g = np.zeros((n, n))
    for start in range(0, p, BLOCK):
        blk = y[:, start : start + BLOCK]
        g += blk @ blk.T
    return _mirror_upper(g)


def affinity_data(y) -> AffinityMatrix:
    """``(1/p) <Y_i, Y_j>`` for all pairs, diagonal included."""
    y = as_data_matrix(y)
    return AffinityMatrix(gram(y) / y.shape[1], "affinity")


def affinity_pca(scores, p: int) -> AffinityMatrix:
    """``(1/p) <zeta_i, zeta_j>`` where ``p`` is the ambient dimension of the source data."""
    if p <= 0:
        raise ValueError("ambient dimension p must be positive")
    zeta = np.asarray(getattr(scores, "values", scores), dtype=np.float64)
    if zeta.ndim != 2:
        raise ValueError("scores must be an n x r matrix")
    return AffinityMatrix(gram(zeta) / p, "affinity")


def affinity_cosine(y) -> AffinityMatrix:
    y = as_data_matrix(y)
    norms = np.linalg.norm(y, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"row {zero[0]} has zero norm; cosine affinity is undefined")
    u = y / norms[:, None]
    c = np.clip(gram(u), -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return AffinityMatrix(c, "affinity")


def cosine_distance(y) -> AffinityMatrix:
    """``1 - cosine affinity``; the input to conventional cosine UPGMA."""
    a = affinity_cosine(y).values
    d = 1.0 - a
    np.fill_diagonal(d, 0.0)
    return AffinityMatrix(np.maximum(d, 0.0), "distance")


_METRICS = {"euclidean": "euclidean", "manhattan": "cityblock", "sqeuclidean": "sqeuclidean"}


def pairwise_distance(y, metric: str = "euclidean") -> AffinityMatrix:
    """Euclidean, Manhattan or squared-Euclidean distances (the last for Ward)."""
    if metric not in _METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(_METRICS)}")
    y = as_data_matrix(y)
    return AffinityMatrix(squareform(pdist(y, _METRICS[metric])), "distance")


def subtract_from_max(aff: AffinityMatrix) -> AffinityMatrix:
    """Dissimilarity ``max - affinity`` (max over off-diagonal entries).

    Average linkage on this matrix reproduces dot-product clustering, so it
    is the form understood by standard min-distance tooling.
    """
    if aff.mode != "affinity":
        raise ValueError("subtract_from_max expects an affinity matrix")
    top = aff.off_diagonal().max()
    d = top - aff.values
    np.fill_diagonal(d, 0.0)
    return AffinityMatrix(d, "distance")


def max_affinity_error(est: AffinityMatrix, truth: AffinityMatrix) -> float:
    """``max_{i != j} |truth(i, j) - est(i, j)|``."""
    if est.values.shape != truth.values.shape:
        raise ValueError(f"shape mismatch: {est.values.shape} vs {truth.values.shape}")
    if est.mode != "affinity" or truth.mode != "affinity":
        raise ValueError("max_affinity_error compares two affinity matrices")
    diff = np.abs(est.values - truth.values)
    np.fill_diagonal(diff, 0.0)
    return float(diff.max())

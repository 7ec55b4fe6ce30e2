"""Uncentered PCA scores and Wasserstein data-splitting rank selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .affinity import as_data_matrix

# relative gap below which two d_r values count as tied
RANK_TIE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Rows are principal-component score vectors ``zeta_i``."""

    values: np.ndarray
    source_dim: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def r(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RankSelection:
    r_hat: int
    curve: tuple[tuple[int, float], ...]

    def to_csv(self) -> str:
        lines = [f"{r},{d!r}" for r, d in self.curve]
        lines.append(f"r_hat,{self.r_hat}")
        return "\n".join(lines) + "\n"


def pc_scores(y, r: int) -> ScoreMatrix:
    """Scores on the top-``r`` eigenvectors of the uncentered ``sum_i Y_i Y_i^T``.

    With ``n <= p`` the n x n Gram matrix is decomposed instead; its
    eigenpairs give the scores directly as ``U_r sqrt(lambda_r)``.
    """
    y = as_data_matrix(y)
    n, p = y.shape
    if not 1 <= r <= min(n, p):
        raise ValueError(f"r must be in [1, {min(n, p)}], got {r}")
    if n <= p:
        evals, evecs = np.linalg.eigh(y @ y.T)
        top = np.argsort(evals)[::-1][:r]
        scores = evecs[:, top] * np.sqrt(np.clip(evals[top], 0.0, None))
    else:
        evals, evecs = np.linalg.eigh(y.T @ y)
        top = np.argsort(evals)[::-1][:r]
        scores = y @ evecs[:, top]
    return ScoreMatrix(scores, p)


def _integer_weights(na: int, nb: int):
    g = math.gcd(na, nb)
    return nb // g, na // g


def transport_cost(cost: np.ndarray) -> float:
    """Optimal transport cost between uniform measures on the rows and columns of ``cost``."""
    na, nb = cost.shape
    if na == 0 or nb == 0:
        raise ValueError("point sets must be non-empty")
    if na == nb:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / na)
    # fractional weights 1/na and 1/nb; scaled to integers the polytope is integral
    wa, wb = _integer_weights(na, nb)
    total = na * wa
    a_eq = sparse.vstack(
        [
            sparse.kron(sparse.eye(na), np.ones((1, nb))),
            sparse.kron(np.ones((1, na)), sparse.eye(nb)),
        ]
    ).tocsr()
    b_eq = np.concatenate([np.full(na, wa, float), np.full(nb, wb, float)])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if not res.success:
        raise RuntimeError(f"transport solver failed: {res.message}")
    plan = np.round(res.x).reshape(na, nb)
    return float((plan * cost).sum() / total)


def wasserstein_distance(a, b) -> float:
    """Exact 1-Wasserstein distance (Euclidean ground cost) between uniform point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("point sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return transport_cost(cdist(a, b))


def select_rank_wasserstein(y, r_max: int) -> RankSelection:
    """Choose the PCA rank whose projection of the first half best matches the second.

    Eigenvectors come from the first ``ceil(n/2)`` rows; those rows are
    projected onto the top-``r`` eigenvectors and compared, as point sets in
    ``R^p``, with the remaining raw rows. The rank minimising the distance
    wins; near-equal distances go to the smaller rank.
    """
    y = as_data_matrix(y)
    n, p = y.shape
    if n < 4:
        raise ValueError("rank selection needs n >= 4")
    half = math.ceil(n / 2)
    if not 1 <= r_max <= min(half, p):
        raise ValueError(f"r_max must be in [1, {min(half, p)}], got {r_max}")
    first, second = y[:half], y[half:]
    if not first.any() or not second.any():
        raise ValueError("a split half is all zeros")

    # first = U S W^T; the projection onto the top r right singular vectors is U_r S_r W_r^T
    u, s, wt = np.linalg.svd(first, full_matrices=False)
    us = u * s
    second_coords = second @ wt.T
    sq_second = np.einsum("ij,ij->i", second, second)
    sq_proj = np.zeros(half)
    cross = np.zeros((half, n - half))
    curve = []
    for r in range(1, r_max + 1):
        k = r - 1
        sq_proj += us[:, k] ** 2
        cross += np.outer(us[:, k], second_coords[:, k])
        sq = sq_proj[:, None] + sq_second[None, :] - 2.0 * cross
        curve.append((r, transport_cost(np.sqrt(np.clip(sq, 0.0, None)))))

    best = min(d for _, d in curve)
    r_hat = next(r for r, d in curve if d <= best + RANK_TIE_RTOL * abs(best))
    return RankSelection(r_hat, tuple(curve))

"""Tree-recovery metrics.

For every sample ``i`` the other ``n - 1`` samples are ranked by how early
they join ``i``, once in a reference hierarchy and once in an estimated
dendrogram, and the two rankings are compared with Kendall's tau-b. The
per-sample values are averaged.

Also here: the affinity-error convergence experiment over an ``(n, p)`` grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .affinity import AffinityMatrix, affinity_cosine, affinity_data, affinity_pca, max_affinity_error
from .dendrogram import Dendrogram, sample_merge_heights
from .genmodel import TreeSpec, sample_additive, support_alpha
from .spectral import pc_scores

ESTIMATORS = ("data", "pca", "cosine")

# contingency-table counting is used while the table stays below this many cells
_TABLE_LIMIT = 4_000_000


class DegenerateRanking(ValueError):
    """Raised when a ranking puts every item in one tie group."""


@dataclass(frozen=True)
class LabelHierarchy:
    """Per-sample labels, one sequence per level, coarse to fine."""

    levels: tuple[tuple, ...]

    def __init__(self, levels: Sequence[Sequence]):
        levels = tuple(tuple(level) for level in levels)
        if not levels:
            raise ValueError("label hierarchy needs at least one level")
        n = len(levels[0])
        if any(len(level) != n for level in levels):
            raise ValueError("all label levels must have the same length")
        object.__setattr__(self, "levels", levels)

    @property
    def n(self) -> int:
        return len(self.levels[0])


@dataclass(frozen=True, eq=False)
class TiedRanking:
    """Midranks (1 = closest) of ``items``; tied items share a rank."""

    items: np.ndarray
    rank: np.ndarray

    @classmethod
    def from_closeness(cls, items, closeness) -> "TiedRanking":
        """Rank so that larger ``closeness`` comes first."""
        return cls(np.asarray(items), rankdata(-np.asarray(closeness, dtype=np.float64)))

    def as_dict(self) -> dict:
        return {int(i): float(r) for i, r in zip(self.items, self.rank)}


@dataclass(frozen=True)
class TauSummary:
    mean: float
    stderr: float
    excluded: int
    values: tuple[float, ...] = ()


def _others(n: int, i: int) -> np.ndarray:
    return np.delete(np.arange(n), i)


def label_closeness(h: LabelHierarchy, i: int) -> np.ndarray:
    """Number of leading levels (coarse first) each sample shares with ``i``.

    Items sharing ``i``'s finest label are closest. A sample matching at a
    fine level but not a coarser one still counts by its deepest match, so
    hierarchies that do not nest strictly are handled.
    """
    n = h.n
    score = np.zeros(n)
    for depth, level in enumerate(h.levels, start=1):
        level = np.asarray(level, dtype=object)
        score[level == level[i]] = depth
    return score


def rank_from_labels(h: LabelHierarchy, i: int) -> TiedRanking:
    if h.n < 3:
        raise ValueError("need at least three samples to rank")
    others = _others(h.n, i)
    return TiedRanking.from_closeness(others, label_closeness(h, i)[others])


def _closeness(d: Dendrogram, m: np.ndarray) -> np.ndarray:
    return m if d.orientation == "affinity" else -m


def rank_from_dendrogram(d: Dendrogram, i: int, heights: np.ndarray | None = None) -> TiedRanking:
    """Rank samples by merge height with ``i``; merging sooner means closer."""
    m = sample_merge_heights(d) if heights is None else heights
    others = _others(m.shape[0], i)
    return TiedRanking.from_closeness(others, _closeness(d, m[i, others]))


def _dense(x: np.ndarray) -> tuple[np.ndarray, int]:
    _, inv = np.unique(x, return_inverse=True)
    return inv.ravel(), int(inv.max()) + 1


def _tie_pairs(codes: np.ndarray) -> int:
    counts = np.bincount(codes).astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


def _score_table(rx, ry, u, v) -> int:
    """Concordant minus discordant pairs from the u x v contingency table."""
    table = np.zeros((u, v), dtype=np.int64)
    np.add.at(table, (rx, ry), 1)
    # later[a, b]: items with x-code > a and y-code == b
    later = np.zeros((u, v), dtype=np.int64)
    later[:-1] = np.cumsum(table[::-1], axis=0)[::-1][1:]
    run = np.cumsum(later, axis=1)
    below = np.zeros((u, v), dtype=np.int64)
    below[:, 1:] = run[:, :-1]
    above = run[:, -1:] - run
    return int((table * (above - below)).sum())


def _score_mergesort(rx, ry) -> int:
    """Concordant minus discordant pairs by merge-sort inversion counting."""
    k = len(rx)
    order = np.lexsort((ry, rx))
    x, y = rx[order], ry[order]
    n0 = k * (k - 1) // 2
    n1 = _tie_pairs(x)
    # pairs tied in both
    joint = _tie_pairs(np.unique(np.stack([x, y]), axis=1, return_inverse=True)[1].ravel())
    n2 = _tie_pairs(y)
    swaps = _inversions(list(y))
    # among pairs untied in x, discordant = swaps; concordant = rest minus y-only ties
    discordant = swaps
    concordant = n0 - n1 - n2 + joint - discordant
    return concordant - discordant


def _inversions(seq: list) -> int:
    width, n, count = 1, len(seq), 0
    src = seq
    while width < n:
        dst = []
        for lo in range(0, n, 2 * width):
            left, right = src[lo : lo + width], src[lo + width : lo + 2 * width]
            i = j = 0
            while i < len(left) and j < len(right):
                if right[j] < left[i]:
                    dst.append(right[j])
                    count += len(left) - i
                    j += 1
                else:
                    dst.append(left[i])
                    i += 1
            dst.extend(left[i:])
            dst.extend(right[j:])
        src, width = dst, 2 * width
    return count


def tau_b_counts(x, y) -> tuple[int, int, int, int]:
    """Integer pieces ``(S, n0, n1, n2)`` with ``tau_b = S / sqrt((n0-n1)(n0-n2))``."""
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("rankings must be 1-D and of equal length")
    k = len(x)
    if k < 2:
        raise ValueError("need at least two items")
    rx, u = _dense(x)
    ry, v = _dense(y)
    n0 = k * (k - 1) // 2
    s = _score_table(rx, ry, u, v) if u * v <= _TABLE_LIMIT else _score_mergesort(rx, ry)
    return s, n0, _tie_pairs(rx), _tie_pairs(ry)


def _tau_from_counts(s, n0, n1, n2) -> float:
    if n0 == n1 or n0 == n2:
        raise DegenerateRanking("a ranking ties every item; tau_b is undefined")
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def kendall_tau_b(x: TiedRanking, y: TiedRanking) -> float:
    """Tie-corrected Kendall correlation between two rankings of the same items."""
    if isinstance(x, TiedRanking) and isinstance(y, TiedRanking):
        if not np.array_equal(np.sort(x.items), np.sort(y.items)):
            raise ValueError("rankings cover different items")
        ox, oy = np.argsort(x.items), np.argsort(y.items)
        x, y = x.rank[ox], y.rank[oy]
    return _tau_from_counts(*tau_b_counts(x, y))


def _summarise(values: list[float], excluded: int) -> TauSummary:
    if not values:
        raise DegenerateRanking("every sample had a degenerate ranking")
    arr = np.asarray(values)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return TauSummary(float(arr.mean()), stderr, excluded, tuple(values))


def mean_tau_b(truth: Sequence[TiedRanking] | np.ndarray, est: Dendrogram) -> TauSummary:
    """Mean and standard error of per-sample tau-b against ``est``.

    ``truth`` is either one :class:`TiedRanking` per sample or an n x n
    closeness matrix (row ``i`` scores every sample's closeness to ``i``;
    larger is closer). Samples whose rankings are all ties are skipped and
    counted in ``excluded``.
    """
    m = sample_merge_heights(est)
    n = m.shape[0]
    if n < 3:
        raise ValueError("need at least three samples")
    close = _closeness(est, m)
    values, excluded = [], 0
    for i in range(n):
        others = _others(n, i)
        if isinstance(truth, np.ndarray):
            t = truth[i, others]
        else:
            r = truth[i]
            t = -r.rank[np.argsort(r.items)]
            if not np.array_equal(np.sort(r.items), others):
                raise ValueError(f"truth ranking {i} does not cover the other samples")
        try:
            values.append(_tau_from_counts(*tau_b_counts(t, close[i, others])))
        except DegenerateRanking:
            excluded += 1
    return _summarise(values, excluded)


def hierarchy_closeness(h: LabelHierarchy) -> np.ndarray:
    """n x n closeness matrix for :func:`mean_tau_b` built from label levels."""
    return np.stack([label_closeness(h, i) for i in range(h.n)])


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    p: int
    estimator: str
    mean_err: float
    std_err: float
    errors: tuple[float, ...]


def estimate_affinity(y: np.ndarray, estimator: str, r: int | None = None) -> AffinityMatrix:
    if estimator == "data":
        return affinity_data(y)
    if estimator == "cosine":
        return affinity_cosine(y)
    if estimator == "pca":
        if r is None:
            raise ValueError("pca estimator needs a rank r")
        return affinity_pca(pc_scores(y, min(r, *y.shape)), y.shape[1])
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def convergence_experiment(
    spec: TreeSpec,
    grid: Sequence[tuple[int, int]],
    estimator: str = "data",
    seeds: int = 100,
    r: int | None = None,
    first_seed: int = 0,
) -> list[ConvergenceRow]:
    """Max off-diagonal affinity error, mean and standard deviation over seeds.

    For ``pca`` the rank defaults to the rank of the true affinity matrix on
    the support.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    if seeds < 1:
        raise ValueError("seeds must be positive")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == "pca" and r is None:
        r = int(np.linalg.matrix_rank(support_alpha(spec)))
    rows = []
    for n, p in grid:
        errs = []
        for s in range(first_seed, first_seed + seeds):
            sample = sample_additive(spec, n, p, s)
            est = estimate_affinity(sample.y, estimator, r)
            errs.append(max_affinity_error(est, sample.true_alpha))
        arr = np.asarray(errs)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        rows.append(ConvergenceRow(n, p, estimator, float(arr.mean()), std, tuple(errs)))
    return rows

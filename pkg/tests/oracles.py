"""Slow, obviously-correct reference implementations used by the tests.

None of these import from the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# ------------------------------------------------------------------ trees
def ancestors(parent: dict, v) -> list:
    out = [v]
    while parent[v] is not None:
        v = parent[v]
        out.append(v)
    return out


def brute_mrca(parent: dict, u, v):
    up = ancestors(parent, u)
    for w in ancestors(parent, v):
        if w in up:
            return w
    raise AssertionError("no common ancestor")


def random_tree(rng, n_leaves: int, binary: bool = False, min_gap: float = 0.1):
    """Random rooted tree with leaves 0..n_leaves-1 and strictly increasing heights.

    Returns ``(parent, height)``. Internal vertices get ids from ``n_leaves``.
    Every edge has length at least ``min_gap``.
    """
    nodes = list(range(n_leaves))
    parent: dict = {}
    next_id = n_leaves
    while len(nodes) > 1:
        k = 2 if binary else int(rng.integers(2, min(4, len(nodes)) + 1))
        pick = rng.choice(len(nodes), size=k, replace=False)
        chosen = [nodes[i] for i in pick]
        for c in chosen:
            parent[c] = next_id
        nodes = [x for i, x in enumerate(nodes) if i not in set(pick)] + [next_id]
        next_id += 1
    root = nodes[0]
    parent[root] = None
    height = {}
    order = [root]
    kids: dict = {}
    for c, p in parent.items():
        if p is not None:
            kids.setdefault(p, []).append(c)
    height[root] = float(rng.uniform(0.0, 1.0))
    while order:
        v = order.pop()
        for c in kids.get(v, []):
            height[c] = height[v] + min_gap + float(rng.exponential(1.0))
            order.append(c)
    return parent, height


def brute_merge_heights(parent: dict, height: dict, vertices) -> np.ndarray:
    k = len(vertices)
    m = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            m[a, b] = height[brute_mrca(parent, vertices[a], vertices[b])]
    return m


def leaf_sets(parent: dict, sample_of: dict) -> list[frozenset]:
    """Sorted list of the sample sets below every vertex (a canonical form)."""
    below = {v: set() for v in parent}
    for v, s in sample_of.items():
        for a in ancestors(parent, v):
            below[a].add(s)
    return sorted((frozenset(x) for x in below.values()), key=lambda s: (len(s), sorted(s)))


# ------------------------------------------------------------- clustering
def greedy_mean_affinity(a: np.ndarray):
    """Agglomerate by recomputing every cluster-pair mean affinity from scratch.

    Ties go to the pair with the lexicographically smallest (min leaf, min leaf).
    Returns a list of ``(cluster_a, cluster_b, value)``.
    """
    clusters = [[i] for i in range(a.shape[0])]
    out = []
    while len(clusters) > 1:
        best = None
        for x, y in itertools.combinations(range(len(clusters)), 2):
            u, v = clusters[x], clusters[y]
            val = a[np.ix_(u, v)].mean()
            key = (-val, min(u), min(v))
            if best is None or key < best[0]:
                best = (key, x, y)
        _, x, y = best
        u, v = clusters[x], clusters[y]
        out.append((frozenset(u), frozenset(v), float(a[np.ix_(u, v)].mean())))
        clusters = [c for i, c in enumerate(clusters) if i not in (x, y)] + [sorted(u + v)]
        clusters.sort(key=min)
    return out


# ----------------------------------------------------------------- ranks
def brute_tau_b(x, y) -> float:
    """Kendall tau-b by enumerating every pair."""
    k = len(x)
    nc = nd = tx = ty = 0
    for i in range(k):
        for j in range(i + 1, k):
            dx = int(x[i] > x[j]) - int(x[i] < x[j])
            dy = int(y[i] > y[j]) - int(y[i] < y[j])
            if dx == 0:
                tx += 1
            if dy == 0:
                ty += 1
            if dx * dy > 0:
                nc += 1
            elif dx * dy < 0:
                nd += 1
    n0 = k * (k - 1) // 2
    return (nc - nd) / math.sqrt((n0 - tx) * (n0 - ty))


def brute_tau_counts(x, y) -> tuple[int, int, int, int]:
    k = len(x)
    s = tx = ty = 0
    for i in range(k):
        for j in range(i + 1, k):
            dx = int(x[i] > x[j]) - int(x[i] < x[j])
            dy = int(y[i] > y[j]) - int(y[i] < y[j])
            s += dx * dy
            tx += dx == 0
            ty += dy == 0
    return s, k * (k - 1) // 2, tx, ty


# -------------------------------------------------------------------- OT
def _plans(rows: list[int], cols: list[int]):
    """Every non-negative integer matrix with the given row and column sums."""
    if not rows:
        if all(c == 0 for c in cols):
            yield []
        return
    first, rest = rows[0], rows[1:]

    def fill(j, left, cols_left, row):
        if j == len(cols_left) - 1:
            if left <= cols_left[j]:
                yield row + [left]
            return
        for t in range(min(left, cols_left[j]) + 1):
            yield from fill(j + 1, left - t, cols_left, row + [t])

    for row in fill(0, first, cols, []):
        remaining = [c - t for c, t in zip(cols, row)]
        for tail in _plans(rest, remaining):
            yield [row] + tail


def brute_transport(cost: np.ndarray) -> float:
    """Minimum over every integer transport plan between uniform measures."""
    na, nb = cost.shape
    g = math.gcd(na, nb)
    wa, wb = nb // g, na // g
    total = na * wa
    best = math.inf
    for plan in _plans([wa] * na, [wb] * nb):
        c = sum(plan[i][j] * float(cost[i, j]) for i in range(na) for j in range(nb) if plan[i][j])
        best = min(best, c)
    return best / total


def euclidean_cost(a, b) -> np.ndarray:
    a, b = np.atleast_2d(a).astype(float), np.atleast_2d(b).astype(float)
    return np.array([[math.dist(x, y) for y in b] for x in a])


# ------------------------------------------------------------------- PCA
def truncated_gram_svd(y: np.ndarray, r: int) -> np.ndarray:
    """Best rank-r approximation of ``Y Y^T`` from a full SVD of ``Y``."""
    u, s, _ = np.linalg.svd(y, full_matrices=False)
    return (u[:, :r] * s[:r] ** 2) @ u[:, :r].T

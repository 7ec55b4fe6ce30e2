"""Agglomerative merge engines.

Dot-product clustering repeatedly merges the pair of clusters with the
largest average affinity. The comparator linkages (average, complete,
single, Ward) are run by the same engines over distance matrices.

Internally everything is minimised: an affinity matrix is negated, which is
exact in floating point, so ``cluster_dot`` and
``cluster_generic(..., "average", "max-affinity")`` share one code path.

Two engines are provided. The nearest-neighbour chain is O(n^2) and is the
default; it relies on every linkage here being reducible. The naive engine
rescans all pairs each step (O(n^3)) and serves as the reference.

Ties among equal candidate pairs are broken towards the lexicographically
smallest ``(min leaf index, max leaf index)`` in the naive engine. Each
cluster occupies the matrix slot of its smallest leaf, so that rule is just
row-major order over the upper triangle. The chain engine follows the same
rule only on tie-free input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .affinity import AffinityMatrix
from .dendrogram import Dendrogram

LINKAGES = ("average", "complete", "single", "ward")
OBJECTIVES = ("max-affinity", "min-distance")


@dataclass(frozen=True, eq=False)
class MergeTrace:
    """Merge history in linkage-matrix form.

    ``linkage`` has one row ``(node_a, node_b, value, size)`` per step. Leaves
    are nodes ``0..n-1`` and step ``m`` (0-based) creates node ``n + m``, the
    numbering used by :mod:`scipy.cluster.hierarchy`. ``value`` is the merge
    affinity for ``max-affinity`` runs and the merge distance otherwise.
    """

    linkage: np.ndarray
    n: int
    objective: str
    negative_fraction: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return self.linkage[:, 2]

    def steps(self):
        """Yield ``(cluster_a, cluster_b, value)`` with clusters as frozensets of samples."""
        members: dict[int, frozenset] = {i: frozenset([i]) for i in range(self.n)}
        for m, (a, b, value, _) in enumerate(self.linkage):
            ca, cb = members.pop(int(a)), members.pop(int(b))
            members[self.n + m] = ca | cb
            yield ca, cb, float(value)

    def partition_sizes(self) -> list[list[int]]:
        """Sorted block sizes of the partition after each step (step 0 is all singletons)."""
        sizes = {i: 1 for i in range(self.n)}
        out = [sorted(sizes.values())]
        for m, (a, b, _, _) in enumerate(self.linkage):
            sizes[self.n + m] = sizes.pop(int(a)) + sizes.pop(int(b))
            out.append(sorted(sizes.values()))
        return out

    def distance_flavour(self, max_affinity: float) -> np.ndarray:
        """Linkage matrix with affinities turned into ``max_affinity - value``."""
        if self.objective != "max-affinity":
            raise ValueError("distance flavour only applies to affinity runs")
        z = self.linkage.copy()
        z[:, 2] = max_affinity - z[:, 2]
        return z


def linkage_update(u_size: int, v_size: int, a_u: float, a_v: float) -> float:
    """Size-weighted average of a merged pair's affinities to a third cluster."""
    if u_size < 1 or v_size < 1:
        raise ValueError("cluster sizes must be positive")
    return float(_combine(np.array([a_u]), np.array([a_v]), 0.0, u_size, v_size, 0, "average")[0])


def _combine(du, dv, duv, su, sv, sx, method):
    """Linkage recurrence for the merged cluster against every other cluster.

    Results are clamped so rounding cannot break reducibility: average stays
    between its operands, Ward never drops below the merge value.
    """
    if method == "average":
        out = (su * du + sv * dv) / (su + sv)
        return np.clip(out, np.minimum(du, dv), np.maximum(du, dv))
    if method == "single":
        return np.minimum(du, dv)
    if method == "complete":
        return np.maximum(du, dv)
    if method == "ward":
        out = ((su + sx) * du + (sv + sx) * dv - sx * duv) / (su + sv + sx)
        return np.maximum(out, duv)
    raise ValueError(f"unknown linkage {method!r}")


def _prepare(mat: AffinityMatrix, linkage: str, objective: str) -> np.ndarray:
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {OBJECTIVES}")
    expected = "affinity" if objective == "max-affinity" else "distance"
    if mat.mode != expected:
        raise ValueError(f"objective {objective!r} needs a {expected} matrix, got {mat.mode}")
    if linkage == "ward" and objective != "min-distance":
        raise ValueError("ward linkage needs squared-Euclidean distances (min-distance)")
    if mat.n < 2:
        raise ValueError("need at least two samples to cluster")
    if not np.all(np.isfinite(mat.values)):
        raise ValueError("matrix contains NaN or infinite entries")
    d = -mat.values if objective == "max-affinity" else mat.values.copy()
    np.fill_diagonal(d, np.inf)
    return d


def _nn_chain(d: np.ndarray, linkage: str) -> list[tuple[float, int, int]]:
    """Nearest-neighbour chain; returns ``(value, slot_a, slot_b)`` in discovery order."""
    n = d.shape[0]
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    chain: list[int] = []
    while len(merges) < n - 1:
        if not chain:
            chain.append(int(np.flatnonzero(active)[0]))
        a = chain[-1]
        row = d[a]
        best = row.min()
        # prefer the previous chain element on ties, or the chain may cycle
        if len(chain) > 1 and row[chain[-2]] == best:
            b = chain[-2]
        else:
            b = int(np.argmin(row))
        if len(chain) > 1 and b == chain[-2]:
            chain.pop()
            chain.pop()
            lo, hi = min(a, b), max(a, b)
            merges.append((float(best), lo, hi))
            _merge_slots(d, size, active, lo, hi, best, linkage)
        else:
            chain.append(b)
    return merges


def _merge_slots(d, size, active, lo, hi, duv, linkage):
    active[hi] = False
    others = np.flatnonzero(active)
    others = others[others != lo]
    new = _combine(d[lo, others], d[hi, others], duv, size[lo], size[hi], size[others], linkage)
    d[lo, others] = new
    d[others, lo] = new
    d[hi, :] = np.inf
    d[:, hi] = np.inf
    size[lo] += size[hi]


def _naive(d: np.ndarray, linkage: str, on_step: Callable | None = None):
    """Greedy reference engine: global best pair each step, ties to the smallest slots."""
    n = d.shape[0]
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    lower = np.tril(np.ones((n, n), dtype=bool))
    members = {i: [i] for i in range(n)}
    merges = []
    for m in range(n - 1):
        cand = np.where(lower, np.inf, d)
        flat = int(np.argmin(cand))
        lo, hi = divmod(flat, n)
        best = d[lo, hi]
        merges.append((float(best), lo, hi))
        _merge_slots(d, size, active, lo, hi, best, linkage)
        members[lo] = members[lo] + members.pop(hi)
        if on_step is not None:
            on_step(m + 1, members, d)
    return merges


def _to_linkage(merges, n: int, sign: float) -> np.ndarray:
    """Order merges by value (stable) and relabel slots into scipy node ids."""
    values = np.array([v for v, _, _ in merges])
    order = np.argsort(values, kind="stable")
    node = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    z = np.empty((n - 1, 4))
    for m, k in enumerate(order):
        value, lo, hi = merges[k]
        a, b = sorted((node[lo], node[hi]))
        size[lo] += size[hi]
        z[m] = (a, b, sign * value, size[lo])
        node[lo] = n + m
    return z


def dendrogram_from_linkage(z: np.ndarray, diagonal: np.ndarray, orientation: str) -> Dendrogram:
    """Dendrogram with leaves ``0..n-1`` (sample i at vertex i) and internal node ``n+m``.

    Internal heights are the merge values. A leaf takes the diagonal entry,
    limited by its parent: ``max`` of the two for affinities, ``min`` for distances.
    """
    n = len(diagonal)
    parent: dict[int, int | None] = {}
    height: dict[int, float] = {}
    for m, (a, b, value, _) in enumerate(z):
        parent[int(a)] = n + m
        parent[int(b)] = n + m
        height[n + m] = float(value)
    parent[2 * n - 2] = None
    pick = max if orientation == "affinity" else min
    for i in range(n):
        height[i] = float(pick(height[parent[i]], diagonal[i]))
    return Dendrogram(parent, height, {i: i for i in range(n)}, orientation)


def cluster_generic(
    mat: AffinityMatrix,
    linkage: str = "average",
    objective: str = "max-affinity",
    engine: str = "chain",
) -> tuple[Dendrogram, MergeTrace]:
    """Agglomerative clustering with the given linkage and objective.

    ``max-affinity`` expects an affinity matrix and yields an affinity-oriented
    dendrogram; ``min-distance`` expects distances (squared Euclidean for Ward).
    """
    d = _prepare(mat, linkage, objective)
    if engine == "chain":
        merges = _nn_chain(d, linkage)
    elif engine == "naive":
        merges = _naive(d, linkage)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    sign = -1.0 if objective == "max-affinity" else 1.0
    z = _to_linkage(merges, mat.n, sign)
    orientation = "affinity" if objective == "max-affinity" else "distance"
    dendro = dendrogram_from_linkage(z, np.diag(mat.values), orientation)
    neg = mat.negative_fraction() if objective == "max-affinity" else 0.0
    return dendro, MergeTrace(z, mat.n, objective, neg)


def cluster_dot(aff: AffinityMatrix, engine: str = "chain") -> tuple[Dendrogram, MergeTrace]:
    """Dot-product hierarchical clustering: merge by largest size-weighted average affinity."""
    return cluster_generic(aff, "average", "max-affinity", engine)


def cluster_naive_traced(
    mat: AffinityMatrix, on_step: Callable, linkage: str = "average", objective: str = "max-affinity"
) -> tuple[Dendrogram, MergeTrace]:
    """Naive engine with a hook called after every merge.

    ``on_step(m, members, values)`` receives the step number, a mapping from
    slot to the sorted-by-merge list of samples in that cluster, and the
    stored inter-cluster values in the engine's minimising form (negated
    affinities for ``max-affinity``). Do not modify ``values``.
    """
    d = _prepare(mat, linkage, objective)
    sign = -1.0 if objective == "max-affinity" else 1.0
    merges = _naive(d, linkage, on_step)
    z = _to_linkage(merges, mat.n, sign)
    orientation = "affinity" if objective == "max-affinity" else "distance"
    return dendrogram_from_linkage(z, np.diag(mat.values), orientation), MergeTrace(
        z, mat.n, objective, mat.negative_fraction() if objective == "max-affinity" else 0.0
    )


def flat_cut(d: Dendrogram, k: int) -> list[list[int]]:
    """Undo the last ``k - 1`` merges and return the ``k`` clusters of samples.

    Expects a binary dendrogram whose internal ids increase with merge order,
    as built by this module. Clusters are sorted by their smallest sample.
    """
    n = d.n_samples
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    internal = sorted(v for v in d.vertices if d.children(v))
    cut = set(internal[len(internal) - (k - 1) :]) if k > 1 else set()
    leaf_sample = d.leaf_sample
    clusters = []
    stack = [d.root]
    while stack:
        v = stack.pop()
        if v in cut:
            stack.extend(d.children(v))
            continue
        samples = []
        todo = [v]
        while todo:
            u = todo.pop()
            kids = d.children(u)
            if kids:
                todo.extend(kids)
            else:
                samples.append(leaf_sample[u])
        clusters.append(sorted(samples))
    return sorted(clusters)

"""Rooted trees with vertex heights, and the geometric queries on them.

A :class:`Dendrogram` stores a parent pointer and a height for every vertex.
Two orientations are supported:

* ``"affinity"`` (the default): heights grow from the root towards the
  leaves, ``h(v) >= h(parent(v))``. This is what dot-product clustering
  produces and what the latent-tree model defines.
* ``"distance"``: heights shrink towards the leaves, as produced by
  conventional min-distance agglomeration (UPGMA, Ward, ...).

Vertices are opaque integers. Leaves that stand for observed samples carry a
``leaf_sample`` index; merge-distortion and ranking queries go through it.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

ORIENTATIONS = ("affinity", "distance")


class DendrogramError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    rule: str
    vertex: int | None
    detail: str = ""

    def __str__(self):
        where = "" if self.vertex is None else f" at vertex {self.vertex}"
        return f"{self.rule}{where}{': ' + self.detail if self.detail else ''}"


class Dendrogram:
    """Immutable rooted tree with a height per vertex.

    Parameters
    ----------
    parent : mapping vertex -> parent vertex, ``None`` for the root.
    height : mapping vertex -> float.
    leaf_sample : optional mapping leaf vertex -> sample index.
    orientation : ``"affinity"`` or ``"distance"``.

    The constructor does not enforce tree invariants; call :func:`validate`.
    """

    def __init__(
        self,
        parent: Mapping[int, int | None],
        height: Mapping[int, float],
        leaf_sample: Mapping[int, int] | None = None,
        orientation: str = "affinity",
    ):
        if orientation not in ORIENTATIONS:
            raise DendrogramError(f"unknown orientation {orientation!r}")
        self._parent = {int(v): (None if p is None else int(p)) for v, p in parent.items()}
        if set(height) != set(self._parent):
            missing = set(self._parent) ^ set(height)
            raise DendrogramError(f"height map does not match vertex set: {sorted(missing)[:5]}")
        self._height = {int(v): float(h) for v, h in height.items()}
        self._leaf_sample = {int(v): int(s) for v, s in (leaf_sample or {}).items()}
        self.orientation = orientation

        children: dict[int, list[int]] = {v: [] for v in self._parent}
        for v, p in self._parent.items():
            if p is not None and p in children:
                children[p].append(v)
        for kids in children.values():
            kids.sort()
        self._children = children
        self._depth: dict[int, int] | None = None
        self._sample_leaf = {s: v for v, s in self._leaf_sample.items()}

    # ---------------------------------------------------------------- access
    @property
    def vertices(self) -> list[int]:
        return sorted(self._parent)

    def parent(self, v: int) -> int | None:
        self._check(v)
        return self._parent[v]

    def height(self, v: int) -> float:
        self._check(v)
        return self._height[v]

    def children(self, v: int) -> list[int]:
        self._check(v)
        return list(self._children[v])

    @property
    def roots(self) -> list[int]:
        return sorted(v for v, p in self._parent.items() if p is None)

    @property
    def root(self) -> int:
        roots = self.roots
        if len(roots) != 1:
            raise DendrogramError(f"expected one root, found {len(roots)}")
        return roots[0]

    @property
    def leaves(self) -> list[int]:
        """Leaves in canonical order: sample leaves by sample index, then the rest by id."""
        leaves = [v for v, kids in self._children.items() if not kids]
        return sorted(leaves, key=lambda v: (v not in self._leaf_sample, self._leaf_sample.get(v, 0), v))

    @property
    def leaf_sample(self) -> dict[int, int]:
        return dict(self._leaf_sample)

    def sample_leaf(self, sample: int) -> int:
        try:
            return self._sample_leaf[sample]
        except KeyError:
            raise KeyError(f"no leaf for sample {sample}") from None

    @property
    def n_samples(self) -> int:
        return len(self._leaf_sample)

    def __len__(self):
        return len(self._parent)

    def __contains__(self, v):
        return v in self._parent

    def __repr__(self):
        return f"Dendrogram({len(self)} vertices, {self.n_samples} samples, {self.orientation})"

    def _check(self, v):
        if v not in self._parent:
            raise KeyError(f"unknown vertex {v!r}")

    def depth(self, v: int) -> int:
        self._check(v)
        if self._depth is None:
            depth: dict[int, int] = {}
            for r in self.roots:
                depth[r] = 0
                stack = [r]
                while stack:
                    u = stack.pop()
                    for c in self._children[u]:
                        depth[c] = depth[u] + 1
                        stack.append(c)
            self._depth = depth
        return self._depth[v]

    def postorder(self) -> list[int]:
        order: list[int] = []
        stack = [(self.root, False)]
        while stack:
            v, done = stack.pop()
            if done:
                order.append(v)
                continue
            stack.append((v, True))
            for c in reversed(self._children[v]):
                stack.append((c, False))
        return order

    def with_heights(self, height: Mapping[int, float]) -> "Dendrogram":
        return Dendrogram(self._parent, height, self._leaf_sample, self.orientation)

    # ----------------------------------------------------------- serialising
    def to_dict(self) -> dict:
        nodes = [
            {
                "id": v,
                "parent": self._parent[v],
                "height": self._height[v],
                "leaf_sample": self._leaf_sample.get(v),
            }
            for v in self.vertices
        ]
        return {"orientation": self.orientation, "nodes": nodes}

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Dendrogram":
        parent, height, leaf_sample = {}, {}, {}
        for node in data["nodes"]:
            v = int(node["id"])
            parent[v] = node["parent"]
            height[v] = node["height"]
            if node.get("leaf_sample") is not None:
                leaf_sample[v] = node["leaf_sample"]
        return cls(parent, height, leaf_sample, data.get("orientation", "affinity"))

    @classmethod
    def from_json(cls, text: str) -> "Dendrogram":
        return cls.from_dict(json.loads(text))

    def to_newick(self) -> str:
        """Newick string; branch length is ``h(child) - h(parent)``."""

        def label(v):
            if v in self._leaf_sample:
                return str(self._leaf_sample[v])
            return f"v{v}" if not self._children[v] else ""

        text: dict[int, str] = {}
        for v in self.postorder():
            kids = self._children[v]
            body = f"({','.join(text.pop(c) for c in kids)})" if kids else ""
            p = self._parent[v]
            length = "" if p is None else f":{self._height[v] - self._height[p]!r}"
            text[v] = f"{body}{label(v)}{length}"
        return text[self.root] + ";"


# -------------------------------------------------------------------- queries
def validate(d: Dendrogram) -> Violation | None:
    """Return ``None`` if every tree invariant holds, else the first violation."""
    roots = d.roots
    if not roots:
        return Violation("no root", None)
    if len(roots) > 1:
        return Violation("multiple roots", roots[1], f"roots {roots}")
    for v in d.vertices:
        p = d._parent[v]
        if p is not None and p not in d._parent:
            return Violation("dangling parent", v, f"parent {p} is not a vertex")
    # reachability also rules out cycles
    seen = {roots[0]}
    stack = [roots[0]]
    while stack:
        for c in d._children[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    unreachable = sorted(set(d._parent) - seen)
    if unreachable:
        return Violation("unreachable vertex", unreachable[0])
    for v in d.vertices:
        if v in d._leaf_sample and d._children[v]:
            return Violation("sample vertex has children", v)
    sign = 1.0 if d.orientation == "affinity" else -1.0
    for v in d.vertices:
        p = d._parent[v]
        if p is None:
            continue
        if sign * (d._height[v] - d._height[p]) < 0 or np.isnan(d._height[v]):
            return Violation(
                "height order", v, f"h={d._height[v]!r} vs parent {p} h={d._height[p]!r}"
            )
    return None


def is_valid(d: Dendrogram) -> bool:
    return validate(d) is None


def mrca(d: Dendrogram, u: int, v: int) -> int:
    """Most recent common ancestor, by a parent walk from the deeper vertex."""
    du, dv = d.depth(u), d.depth(v)
    par = d._parent
    while du > dv:
        u, du = par[u], du - 1
    while dv > du:
        v, dv = par[v], dv - 1
    while u != v:
        u, v = par[u], par[v]
    return u


def merge_height(d: Dendrogram, u: int, v: int) -> float:
    return d._height[mrca(d, u, v)]


def tree_distance(d: Dendrogram, u: int, v: int) -> float:
    return d.height(u) + d.height(v) - 2.0 * merge_height(d, u, v)


def min_branch_length(d: Dendrogram, include_sample_leaves: bool = False) -> float:
    """Smallest ``|h(v) - h(parent(v))|`` over non-root vertices.

    Edges into sample leaves (e.g. those added by :func:`augment`) are skipped
    unless ``include_sample_leaves`` is set.
    """
    gaps = [
        abs(d._height[v] - d._height[p])
        for v, p in d._parent.items()
        if p is not None and (include_sample_leaves or v not in d._leaf_sample)
    ]
    if not gaps:
        raise DendrogramError("min_branch_length needs at least one edge")
    return min(gaps)


def merge_height_matrix(d: Dendrogram, vertices: Sequence[int]) -> np.ndarray:
    """All-pairs merge heights ``M[a, b] = merge_height(vertices[a], vertices[b])``.

    Runs in O(len(vertices)**2 + |V|) by assigning each block of pairs at the
    vertex where they first meet. Repeated vertices are allowed.
    """
    k = len(vertices)
    out = np.empty((k, k))
    at: dict[int, list[int]] = {}
    for idx, v in enumerate(vertices):
        d._check(v)
        at.setdefault(v, []).append(idx)
    below: dict[int, np.ndarray] = {}
    for v in d.postorder():
        h = d._height[v]
        groups = [below.pop(c) for c in d._children[v] if c in below]
        here = at.get(v)
        if here:
            here = np.asarray(here, dtype=np.intp)
            out[np.ix_(here, here)] = h
            groups.append(here)
        if not groups:
            continue
        acc = groups[0]
        for g in groups[1:]:
            out[np.ix_(acc, g)] = h
            out[np.ix_(g, acc)] = h
            acc = np.concatenate([acc, g])
        below[v] = acc
    return out


def sample_merge_heights(d: Dendrogram, n: int | None = None) -> np.ndarray:
    """Merge heights between sample leaves ``0..n-1``, as an n x n matrix."""
    n = d.n_samples if n is None else n
    return merge_height_matrix(d, [d.sample_leaf(i) for i in range(n)])


def merge_distortion(truth: Dendrogram, z: Sequence[int], est: Dendrogram) -> float:
    """``max_{i != j} |m(z_i, z_j) - m_est(i, j)|`` over samples ``0..n-1``."""
    n = len(z)
    if any(zi is None for zi in z):
        raise DendrogramError("unassigned sample in z")
    if est.n_samples != n:
        raise DendrogramError(f"estimate has {est.n_samples} sample leaves, z has {n}")
    if n < 2:
        return 0.0
    m_true = merge_height_matrix(truth, list(z))
    m_est = sample_merge_heights(est, n)
    diff = np.abs(m_true - m_est)
    np.fill_diagonal(diff, 0.0)
    return float(diff.max())


def augment(truth: Dendrogram, z: Sequence[int], leaf_heights: Sequence[float]) -> Dendrogram:
    """Attach one leaf per sample under its latent vertex and prune unused support.

    Subtrees that carry no samples are removed. A vertex left with a single
    child by that removal, and holding no samples itself, is spliced out; it
    can never be a most recent common ancestor so merge heights are kept.
    """
    if len(leaf_heights) != len(z):
        raise DendrogramError("leaf_heights and z differ in length")
    sign = 1.0 if truth.orientation == "affinity" else -1.0
    for i, (v, h) in enumerate(zip(z, leaf_heights)):
        truth._check(v)
        if sign * (h - truth._height[v]) < 0:
            raise DendrogramError(f"sample {i}: leaf height {h} violates height order under {v}")

    used = set(z)
    keep: set[int] = set()
    for v in truth.postorder():
        if v in used or any(c in keep for c in truth._children[v]):
            keep.add(v)

    parent = {v: truth._parent[v] for v in keep}
    kids = {v: [c for c in truth._children[v] if c in keep] for v in keep}
    for v in truth.postorder():
        if v not in keep or v in used:
            continue
        lost = len(kids[v]) < len(truth._children[v])
        if lost and len(kids[v]) == 1:
            (c,) = kids[v]
            p = parent[v]
            parent[c] = p
            if p is not None:
                kids[p] = [c if x == v else x for x in kids[p]]
            del parent[v], kids[v]

    height = {v: truth._height[v] for v in parent}
    leaf_sample = {}
    next_id = max(truth.vertices) + 1
    for i, (v, h) in enumerate(zip(z, leaf_heights)):
        parent[next_id] = v
        height[next_id] = float(h)
        leaf_sample[next_id] = i
        next_id += 1
    return Dendrogram(parent, height, leaf_sample, truth.orientation)


def _leaf_label(d: Dendrogram, v: int):
    return d._leaf_sample[v] if v in d._leaf_sample else ("vertex", v)


def canonical_form(d: Dendrogram) -> Counter:
    """Multiset of leaf-label sets, one per vertex; internal ids are forgotten."""
    sets: dict[int, frozenset] = {}
    form: Counter = Counter()
    for v in d.postorder():
        kids = d._children[v]
        s = frozenset().union(*(sets.pop(c) for c in kids)) if kids else frozenset([_leaf_label(d, v)])
        sets[v] = s
        form[s] += 1
    return form


def isomorphic(d1: Dendrogram, d2: Dendrogram) -> bool:
    """Tree isomorphism fixing leaf labels (sample index, else vertex id)."""
    l1 = {_leaf_label(d1, v) for v in d1.leaves}
    l2 = {_leaf_label(d2, v) for v in d2.leaves}
    if l1 != l2:
        raise DendrogramError("dendrograms have different leaf label sets")
    return canonical_form(d1) == canonical_form(d2)


def from_parent_list(
    edges: Iterable[tuple[int, int]], height: Mapping[int, float], **kwargs
) -> Dendrogram:
    """Build from ``(parent, child)`` pairs; the root is the one vertex never a child."""
    parent: dict[int, int | None] = {}
    for p, c in edges:
        parent.setdefault(p, None)
        parent[c] = p
    return Dendrogram(parent, height, **kwargs)

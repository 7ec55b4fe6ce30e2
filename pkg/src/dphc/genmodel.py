"""Simulator for the latent-tree model.

Each coordinate ``j`` diffuses down the tree independently: the root draws
``N(0, root_variance)`` and every child adds an independent
``N(0, edge_variance)`` increment to its parent's value. Observations pick a
support vertex ``Z_i`` and add isotropic noise, ``Y_i = X(Z_i) + sigma E_i``.
Under this model ``(1/p) E<X(u), X(v)>`` is the root variance plus the edge
variances down to the most recent common ancestor, so the analytic truth is
available for every pair.

Random streams
--------------
All draws use Philox (counter-based) generators keyed by
``SeedSequence(seed, spawn_key=key)``:

* ``(0, k, b)``: vertex ``k`` (index in sorted vertex order), dimension block ``b``
* ``(1,)``: latent assignments ``Z``
* ``(2, i, b)``: noise for sample ``i``, dimension block ``b``
* ``(3,)``: multiplicative factors ``gamma``

Blocks are ``DIM_BLOCK`` coordinates wide, so any block can be generated on
its own and the output does not depend on how the work is split up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .affinity import AffinityMatrix
from .dendrogram import Dendrogram, merge_height_matrix

DIM_BLOCK = 4096

GammaDist = Callable[[np.random.Generator, int], np.ndarray]


def lognormal_gamma(sigma: float = 0.25) -> GammaDist:
    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.lognormal(0.0, sigma, size)

    return draw


@dataclass(frozen=True)
class TreeSpec:
    """Generative tree: edges ``(parent, child, variance)`` plus support and noise."""

    edges: tuple[tuple[int, int, float], ...]
    root_variance: float
    support: tuple[int, ...]
    weights: tuple[float, ...]
    sigma: float = 1.0
    gamma_dist: GammaDist | None = field(default=None, compare=False)
    single_vertex: int | None = None

    def __post_init__(self):
        edges = tuple((int(p), int(c), float(v)) for p, c, v in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "support", tuple(int(s) for s in self.support))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not edges and self.single_vertex is None:
            raise ValueError("a tree without edges needs single_vertex")
        children = [c for _, c, _ in edges]
        if len(set(children)) != len(children):
            raise ValueError("a vertex has more than one parent")
        roots = set(self.vertices) - set(children)
        if len(roots) != 1:
            raise ValueError(f"edges must form a rooted tree, found roots {sorted(roots)}")
        if any(not np.isfinite(v) or v < 0 for _, _, v in edges):
            raise ValueError("edge variances must be finite and non-negative")
        if not np.isfinite(self.root_variance) or self.root_variance < 0:
            raise ValueError("root variance must be finite and non-negative")
        if not self.support:
            raise ValueError("support must be non-empty")
        if set(self.support) - set(self.vertices):
            raise ValueError("support contains unknown vertices")
        if len(self.weights) != len(self.support):
            raise ValueError("weights and support differ in length")
        if any(w < 0 for w in self.weights) or not np.isclose(sum(self.weights), 1.0):
            raise ValueError("support weights must be a probability vector")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        # every vertex must hang off the root
        parent = {c: p for p, c, _ in edges}
        for v in self.vertices:
            seen = set()
            while v in parent:
                if v in seen:
                    raise ValueError("edges contain a cycle")
                seen.add(v)
                v = parent[v]

    @property
    def vertices(self) -> list[int]:
        vs = {p for p, _, _ in self.edges} | {c for _, c, _ in self.edges}
        if self.single_vertex is not None:
            vs.add(int(self.single_vertex))
        return sorted(vs)

    @property
    def root(self) -> int:
        children = {c for _, c, _ in self.edges}
        return next(v for v in self.vertices if v not in children)

    @property
    def leaves(self) -> list[int]:
        parents = {p for p, _, _ in self.edges}
        return [v for v in self.vertices if v not in parents]

    def topological(self) -> list[int]:
        kids: dict[int, list[int]] = {}
        for p, c, _ in self.edges:
            kids.setdefault(p, []).append(c)
        order, stack = [], [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(sorted(kids.get(v, []), reverse=True))
        return order

    # ---------------------------------------------------------------- files
    def to_dict(self) -> dict:
        data = {
            "root_variance": self.root_variance,
            "edges": [list(e) for e in self.edges],
            "support": list(self.support),
            "weights": list(self.weights),
            "sigma": self.sigma,
        }
        if self.single_vertex is not None:
            data["single_vertex"] = self.single_vertex
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TreeSpec":
        return cls(
            edges=tuple(tuple(e) for e in data["edges"]),
            root_variance=data["root_variance"],
            support=tuple(data["support"]),
            weights=tuple(data["weights"]),
            sigma=data.get("sigma", 1.0),
            single_vertex=data.get("single_vertex"),
        )

    @classmethod
    def from_json(cls, text: str) -> "TreeSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True, eq=False)
class SampleSet:
    y: np.ndarray
    z: np.ndarray
    true_alpha: AffinityMatrix
    truth: Dendrogram
    seed: int
    gamma: np.ndarray | None = None


def builtin_tree_e1(sigma: float = 1.0) -> TreeSpec:
    """Eight-vertex simulation tree: root 8, internal 6 and 7, leaves 1-5 as support."""
    edges = (
        (6, 1, 5.0),
        (6, 2, 2.0),
        (6, 3, 2.0),
        (7, 4, 0.5),
        (7, 5, 7.0),
        (8, 6, 2.0),
        (8, 7, 1.0),
    )
    return TreeSpec(edges, 1.0, (1, 2, 3, 4, 5), (0.2,) * 5, sigma)


def true_heights(spec: TreeSpec) -> dict[int, float]:
    var = {c: v for _, c, v in spec.edges}
    parent = {c: p for p, c, _ in spec.edges}
    h: dict[int, float] = {}
    for v in spec.topological():
        h[v] = spec.root_variance if v not in parent else h[parent[v]] + var[v]
    return h


def true_dendrogram(spec: TreeSpec) -> Dendrogram:
    parent: dict[int, int | None] = {v: None for v in spec.vertices}
    for p, c, _ in spec.edges:
        parent[c] = p
    return Dendrogram(parent, true_heights(spec))


def support_alpha(spec: TreeSpec) -> np.ndarray:
    """Affinity matrix between support vertices, in support order."""
    return merge_height_matrix(true_dendrogram(spec), list(spec.support))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _blocks(p: int):
    for b, start in enumerate(range(0, p, DIM_BLOCK)):
        yield b, start, min(start + DIM_BLOCK, p)


def sample_latent(spec: TreeSpec, p: int, seed: int) -> dict[int, np.ndarray]:
    """Draw ``X(v)`` for every vertex by Gaussian diffusion down the tree."""
    var = {c: v for _, c, v in spec.edges}
    parent = {c: p_ for p_, c, _ in spec.edges}
    index = {v: k for k, v in enumerate(spec.vertices)}
    x = {v: np.empty(p) for v in spec.vertices}
    for b, lo, hi in _blocks(p):
        for v in spec.topological():
            rng = _rng(seed, 0, index[v], b)
            if v in parent:
                x[v][lo:hi] = x[parent[v]][lo:hi] + rng.normal(0.0, np.sqrt(var[v]), hi - lo)
            else:
                x[v][lo:hi] = rng.normal(0.0, np.sqrt(spec.root_variance), hi - lo)
    return x


def _sample_set(spec, y, z, seed, gamma=None) -> SampleSet:
    truth = true_dendrogram(spec)
    alpha = merge_height_matrix(truth, list(z))
    return SampleSet(y, np.asarray(z), AffinityMatrix(alpha, "affinity"), truth, seed, gamma)


def sample_additive(spec: TreeSpec, n: int, p: int, seed: int) -> SampleSet:
    """``Y_i = X(Z_i) + sigma E_i`` with ``Z_i`` drawn from the support weights."""
    if n < 2 or p < 1:
        raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    z_idx = _rng(seed, 1).choice(len(spec.support), size=n, p=np.asarray(spec.weights))
    z = np.asarray(spec.support)[z_idx]
    x = sample_latent(spec, p, seed)
    y = np.empty((n, p))
    for i in range(n):
        y[i] = x[z[i]]
        if spec.sigma > 0:
            for b, lo, hi in _blocks(p):
                y[i, lo:hi] += spec.sigma * _rng(seed, 2, i, b).standard_normal(hi - lo)
    return _sample_set(spec, y, z, seed)


def unit_leaf_spec(spec: TreeSpec) -> TreeSpec:
    """Rescale variances so every leaf has height exactly 1 and support = leaves.

    All variances are divided by the largest leaf height, then each leaf edge
    is stretched to reach 1. Required before :func:`sample_multiplicative`.
    """
    h = true_heights(spec)
    leaves = spec.leaves
    scale = max(h[v] for v in leaves)
    if scale <= 0:
        raise ValueError("tree has zero height; cannot normalise")
    edges = []
    for p, c, v in spec.edges:
        if c in leaves:
            v = 1.0 - h[p] / scale
        else:
            v = v / scale
        edges.append((p, c, v))
    w = (1.0 / len(leaves),) * len(leaves)
    return replace(
        spec,
        edges=tuple(edges),
        root_variance=spec.root_variance / scale,
        support=tuple(leaves),
        weights=w,
    )


def sample_multiplicative(spec: TreeSpec, p: int, seed: int) -> SampleSet:
    """One sample per leaf, ``Y_i = gamma_i X(leaf_i)``.

    The support must be exactly the leaves and every leaf must have height 1;
    see :func:`unit_leaf_spec`. ``X`` uses the same streams as
    :func:`sample_additive`, so ``gamma = 1`` reproduces its noiseless leaves.
    """
    if sorted(spec.support) != spec.leaves:
        raise ValueError("multiplicative model needs support equal to the leaf set")
    h = true_heights(spec)
    off = [v for v in spec.support if abs(h[v] - 1.0) > 1e-12]
    if off:
        raise ValueError(f"leaf heights must be 1; vertex {off[0]} has {h[off[0]]}")
    n = len(spec.support)
    if n < 2:
        raise ValueError("multiplicative model needs at least two leaves")
    draw = spec.gamma_dist or lognormal_gamma()
    gamma = np.asarray(draw(_rng(seed, 3), n), dtype=np.float64)
    if gamma.shape != (n,) or np.any(gamma <= 0):
        raise ValueError("gamma_dist must return n strictly positive values")
    x = sample_latent(spec, p, seed)
    y = np.stack([gamma[i] * x[v] for i, v in enumerate(spec.support)])
    return _sample_set(spec, y, list(spec.support), seed, gamma)

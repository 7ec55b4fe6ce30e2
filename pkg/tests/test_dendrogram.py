import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dphc.dendrogram import (
    Dendrogram,
    DendrogramError,
    augment,
    canonical_form,
    from_parent_list,
    isomorphic,
    merge_distortion,
    merge_height,
    merge_height_matrix,
    min_branch_length,
    mrca,
    sample_merge_heights,
    tree_distance,
    validate,
)
from oracles import brute_merge_heights, brute_mrca, leaf_sets, random_tree

# fixture F: root g(1); e(2), f(3); e -> a(5), b(4); f -> c(4), d(6)
A, B, C, D, E, F, G = range(7)
F_EDGES = [(G, E), (G, F), (E, A), (E, B), (F, C), (F, D)]
F_HEIGHT = {G: 1.0, E: 2.0, F: 3.0, A: 5.0, B: 4.0, C: 4.0, D: 6.0}


@pytest.fixture
def tree_f():
    return from_parent_list(F_EDGES, F_HEIGHT)


def trees(max_leaves=10, binary=False):
    return st.builds(
        lambda seed, k: random_tree(np.random.default_rng(seed), k, binary=binary),
        st.integers(0, 2**32 - 1),
        st.integers(2, max_leaves),
    )


class TestValidate:
    def test_two_leaf_tree_ok(self):
        d = Dendrogram({0: None, 1: 0, 2: 0}, {0: 1.0, 1: 2.0, 2: 3.0})
        assert validate(d) is None

    def test_leaf_below_parent(self):
        d = Dendrogram({0: None, 1: 0, 2: 0}, {0: 1.0, 1: 0.5, 2: 3.0})
        v = validate(d)
        assert v.rule == "height order" and v.vertex == 1

    def test_multiple_roots(self):
        d = Dendrogram({0: None, 1: None}, {0: 1.0, 1: 1.0})
        assert validate(d).rule == "multiple roots"

    def test_cycle_is_unreachable(self):
        d = Dendrogram({0: None, 1: 2, 2: 1}, {0: 0.0, 1: 1.0, 2: 1.0})
        assert validate(d).rule == "unreachable vertex"

    def test_dangling_parent(self):
        d = Dendrogram({0: None, 1: 9}, {0: 0.0, 1: 1.0})
        assert validate(d).rule == "dangling parent"

    def test_distance_orientation_reverses_order(self):
        heights = {0: 3.0, 1: 0.0, 2: 0.0}
        assert validate(Dendrogram({0: None, 1: 0, 2: 0}, heights, orientation="distance")) is None
        assert validate(Dendrogram({0: None, 1: 0, 2: 0}, heights)).rule == "height order"

    def test_equal_heights_allowed(self):
        assert validate(Dendrogram({0: None, 1: 0, 2: 0}, {0: 1.0, 1: 1.0, 2: 1.0})) is None


class TestQueries:
    def test_mrca(self, tree_f):
        assert mrca(tree_f, A, B) == E
        assert mrca(tree_f, A, C) == G
        assert mrca(tree_f, A, A) == A

    def test_merge_height(self, tree_f):
        assert merge_height(tree_f, A, B) == 2
        assert merge_height(tree_f, A, C) == 1
        assert merge_height(tree_f, A, A) == 5

    def test_tree_distance(self, tree_f):
        assert tree_distance(tree_f, A, B) == 5
        assert tree_distance(tree_f, A, A) == 0
        assert tree_distance(tree_f, C, D) == 4

    def test_unknown_vertex(self, tree_f):
        with pytest.raises(KeyError):
            mrca(tree_f, A, 99)

    def test_min_branch_length(self, tree_f):
        assert min_branch_length(tree_f) == 1
        zero = Dendrogram({0: None, 1: 0, 2: 0}, {0: 1.0, 1: 1.0, 2: 2.0})
        assert min_branch_length(zero) == 0
        assert min_branch_length(Dendrogram({0: None, 1: 0, 2: 0}, {0: 1.0, 1: 2.0, 2: 4.0})) == 1

    def test_min_branch_length_single_vertex(self):
        with pytest.raises(DendrogramError):
            min_branch_length(Dendrogram({0: None}, {0: 1.0}))

    def test_merge_height_matrix_matches_brute(self, tree_f):
        vs = [A, B, C, D, E, F, G, A]
        parent = {v: tree_f.parent(v) for v in tree_f.vertices}
        assert np.array_equal(merge_height_matrix(tree_f, vs), brute_merge_heights(parent, F_HEIGHT, vs))


@settings(max_examples=60, deadline=None)
@given(trees())
def test_merge_height_properties(tree):
    parent, height = tree
    d = Dendrogram(parent, height)
    vs = d.vertices
    m = merge_height_matrix(d, vs)
    assert np.array_equal(m, m.T)
    assert np.array_equal(m, brute_merge_heights(parent, height, vs))
    h = np.array([height[v] for v in vs])
    assert np.all(m <= np.minimum.outer(h, h))
    # three-point condition
    k = len(vs)
    for u, v, w in itertools.product(range(k), repeat=3):
        assert m[u, w] >= min(m[u, v], m[v, w])


@settings(max_examples=40, deadline=None)
@given(trees())
def test_tree_distance_triangle_on_leaves(tree):
    parent, height = tree
    d = Dendrogram(parent, height)
    leaves = d.leaves
    for u, v, w in itertools.product(leaves, repeat=3):
        assert tree_distance(d, u, w) <= tree_distance(d, u, v) + tree_distance(d, v, w) + 1e-12
    for u, v in itertools.product(leaves, repeat=2):
        dist = tree_distance(d, u, v)
        assert dist >= 0 and (dist == 0) == (u == v)


@settings(max_examples=40, deadline=None)
@given(trees())
def test_mrca_matches_brute(tree):
    parent, height = tree
    d = Dendrogram(parent, height)
    for u, v in itertools.product(d.vertices, repeat=2):
        assert mrca(d, u, v) == brute_mrca(parent, u, v)


class TestDistortion:
    def test_exact_is_zero(self, tree_f):
        z = [A, B, C, D]
        est = augment(tree_f, z, [F_HEIGHT[v] for v in z])
        assert merge_distortion(tree_f, z, est) == 0

    def test_uniform_shift(self, tree_f):
        z = [A, B, C, D]
        est = augment(tree_f, z, [F_HEIGHT[v] for v in z])
        shifted = est.with_heights({v: est.height(v) + 0.3 for v in est.vertices})
        assert merge_distortion(tree_f, z, shifted) == pytest.approx(0.3, abs=1e-15)

    def test_leaf_count_mismatch(self, tree_f):
        est = augment(tree_f, [A, B], [5.0, 4.0])
        with pytest.raises(DendrogramError):
            merge_distortion(tree_f, [A, B, C], est)

    def test_unassigned_sample(self, tree_f):
        est = augment(tree_f, [A, B], [5.0, 4.0])
        with pytest.raises(DendrogramError):
            merge_distortion(tree_f, [A, None], est)


class TestAugment:
    def test_pruning_example(self, tree_f):
        z = [A, A, A, B, D, D]
        out = augment(tree_f, z, [F_HEIGHT[v] + 0.5 for v in z])
        assert validate(out) is None
        assert C not in out
        # f is left with the single child d and is spliced out
        assert F not in out
        assert out.n_samples == 6
        assert len(out) == 7 - 2 + 6
        assert out.parent(D) == G

    def test_no_pruning(self, tree_f):
        z = [A, B, C, D]
        out = augment(tree_f, z, [10.0] * 4)
        assert len(out) == 7 + 4

    def test_leaf_below_parent(self, tree_f):
        with pytest.raises(DendrogramError):
            augment(tree_f, [A], [4.0])

    def test_equal_height_allowed(self, tree_f):
        out = augment(tree_f, [A, C], [5.0, 4.0])
        assert validate(out) is None
        assert min_branch_length(out) > 0
        assert min_branch_length(out, include_sample_leaves=True) == 0


@settings(max_examples=60, deadline=None)
@given(trees(), st.integers(0, 2**32 - 1))
def test_augment_preserves_merge_heights(tree, seed):
    parent, height = tree
    d = Dendrogram(parent, height)
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    z = [int(v) for v in rng.choice(d.vertices, size=n)]
    out = augment(d, z, [height[v] + float(rng.uniform(0, 1)) for v in z])
    assert validate(out) is None
    assert np.array_equal(sample_merge_heights(out), _sample_block(d, z, out))
    survivors = [v for v in d.vertices if v in out]
    assert np.array_equal(merge_height_matrix(out, survivors), merge_height_matrix(d, survivors))


def _sample_block(d, z, out):
    """Truth merge heights between samples, with the diagonal replaced by leaf heights."""
    m = merge_height_matrix(d, z)
    np.fill_diagonal(m, [out.height(out.sample_leaf(i)) for i in range(len(z))])
    return m


class TestIsomorphic:
    def test_identical(self, tree_f):
        assert isomorphic(tree_f, tree_f)

    def test_internal_ids_permuted(self):
        a = Dendrogram({4: None, 5: 4, 0: 5, 1: 5, 2: 4}, {4: 0, 5: 1, 0: 2, 1: 2, 2: 2}, {0: 0, 1: 1, 2: 2})
        b = Dendrogram({9: None, 7: 9, 0: 7, 1: 7, 2: 9}, {9: 0, 7: 1, 0: 2, 1: 2, 2: 2}, {0: 0, 1: 1, 2: 2})
        assert isomorphic(a, b)

    def test_caterpillar_vs_balanced(self):
        s = {i: i for i in range(4)}
        cat = from_parent_list([(6, 5), (6, 3), (5, 4), (5, 2), (4, 0), (4, 1)], dict.fromkeys(range(7), 0.0), leaf_sample=s)
        bal = from_parent_list([(6, 4), (6, 5), (4, 0), (4, 1), (5, 2), (5, 3)], dict.fromkeys(range(7), 0.0), leaf_sample=s)
        assert not isomorphic(cat, bal)

    def test_leaf_mismatch(self):
        a = Dendrogram({2: None, 0: 2, 1: 2}, dict.fromkeys(range(3), 0.0), {0: 0, 1: 1})
        b = Dendrogram({2: None, 0: 2, 1: 2}, dict.fromkeys(range(3), 0.0), {0: 0, 1: 5})
        with pytest.raises(DendrogramError):
            isomorphic(a, b)


@settings(max_examples=50, deadline=None)
@given(trees(), st.integers(0, 2**32 - 1))
def test_isomorphic_equivalence(tree, seed):
    parent, height = tree
    leaves = [v for v in parent if v not in set(parent.values())]
    sample_of = {v: i for i, v in enumerate(sorted(leaves))}
    d = Dendrogram(parent, height, sample_of)
    # relabel internal vertices at random
    rng = np.random.default_rng(seed)
    internal = [v for v in parent if v not in sample_of]
    new_ids = dict(zip(internal, (rng.permutation(len(internal)) + 1000).tolist()))
    rename = lambda v: new_ids.get(v, v)  # noqa: E731
    e = Dendrogram(
        {rename(v): (None if p is None else rename(p)) for v, p in parent.items()},
        {rename(v): h for v, h in height.items()},
        sample_of,
    )
    assert isomorphic(d, d)
    assert isomorphic(d, e) and isomorphic(e, d)
    assert canonical_form(d) == canonical_form(e)
    assert sorted(map(sorted, canonical_form(d))) == sorted(map(sorted, leaf_sets(parent, sample_of)))


class TestSerialisation:
    def test_json_round_trip(self, tree_f):
        z = [A, B, D]
        d = augment(tree_f, z, [5.5, 4.25, 6.125])
        back = Dendrogram.from_json(d.to_json())
        assert isomorphic(d, back)
        assert {v: d.height(v) for v in d.vertices} == {v: back.height(v) for v in back.vertices}
        assert back.leaf_sample == d.leaf_sample

    def test_json_fields(self, tree_f):
        data = tree_f.to_dict()
        assert set(data["nodes"][0]) == {"id", "parent", "height", "leaf_sample"}

    def test_newick_branch_lengths(self):
        d = Dendrogram({2: None, 0: 2, 1: 2}, {2: 1.0, 0: 2.5, 1: 4.0}, {0: 0, 1: 1})
        assert d.to_newick() == "(0:1.5,1:3.0);"

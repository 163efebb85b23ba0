import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimsim.search_tree import (
    MavDistribution,
    Node,
    SearchTree,
    TreeStructureError,
    balanced_tree,
    build_optimal_tree,
    empirical_distribution,
    expected_comparisons,
    mav_distribution_binomial,
)

# exact DP optimum for binomial(32, 0.25) at 5 bits, frozen from the memoized oracle below
BINOMIAL_OPTIMUM = 3.397618263001858


def all_trees(lo, hi):
    """Every alphabetic tree over codes lo..hi-1 (Catalan many)."""
    if hi - lo == 1:
        yield lo
        return
    for t in range(lo + 1, hi):
        for left in all_trees(lo, t):
            for right in all_trees(t, hi):
                yield Node(t, left, right)


def memo_optimum(p):
    """Independent top-down oracle: cost(i, j) = mass(i, j) + min over splits."""
    p = tuple(float(v) for v in p)

    @lru_cache(maxsize=None)
    def cost(i, j):
        if i == j:
            return 0.0
        return math.fsum(p[i:j + 1]) + min(cost(i, r) + cost(r + 1, j) for r in range(i, j))

    return cost(0, len(p) - 1)


dists = st.integers(1, 3).flatmap(
    lambda b: st.lists(st.floats(0.0, 1.0), min_size=2**b, max_size=2**b)
    .filter(lambda v: sum(v) > 1e-3)
    .map(lambda v: MavDistribution(np.array(v) / sum(v))))


@given(dists)
def test_dp_matches_catalan_brute_force(dist):
    n = dist.probabilities.size
    brute = min(expected_comparisons(SearchTree(t, dist.bits), dist) for t in all_trees(0, n))
    assert expected_comparisons(build_optimal_tree(dist), dist) == pytest.approx(brute, abs=1e-12)


def test_catalan_counts():
    assert [sum(1 for _ in all_trees(0, n)) for n in (2, 4, 8)] == [1, 5, 429]


def test_binomial_optimum_frozen():
    dist = mav_distribution_binomial(32, 0.25, 5)
    got = expected_comparisons(build_optimal_tree(dist), dist)
    assert got == pytest.approx(BINOMIAL_OPTIMUM, abs=1e-12)
    assert memo_optimum(dist.probabilities) == pytest.approx(BINOMIAL_OPTIMUM, abs=1e-12)
    # entropy lower bound for any binary search
    assert dist.entropy() <= got < 5.0


def test_binomial_distribution():
    assert mav_distribution_binomial(32, 0.0, 5).probabilities[0] == 1.0
    u = mav_distribution_binomial(32, 0.25, 5, uniform=True).probabilities
    assert np.all(u == 1 / 32)
    p8 = math.comb(32, 8) * 0.25**8 * 0.75**24
    assert mav_distribution_binomial(32, 0.25, 5).probabilities[8] == pytest.approx(p8, rel=1e-12)
    top = sum(math.comb(32, k) * 0.25**k * 0.75 ** (32 - k) for k in range(31, 33))
    assert mav_distribution_binomial(32, 0.25, 5).probabilities[31] == pytest.approx(top, rel=1e-9)
    with pytest.raises(ValueError):
        mav_distribution_binomial(32, 0.25, 6)


def test_empirical_distribution():
    d = empirical_distribution([7] * 100, 5).probabilities
    assert d.argmax() == 7 and np.all(d > 0)
    d = empirical_distribution(np.repeat(np.arange(32), 50), 5).probabilities
    np.testing.assert_allclose(d, 1 / 32)
    rng = np.random.default_rng(1)
    samples = np.minimum(rng.binomial(32, 0.25, 100_000), 31)
    tv = 0.5 * np.abs(empirical_distribution(samples, 5).probabilities
                      - mav_distribution_binomial(32, 0.25, 5).probabilities).sum()
    assert tv < 0.02
    with pytest.raises(ValueError):
        empirical_distribution([32], 5)


def test_uniform_gives_balanced():
    dist = mav_distribution_binomial(32, 0.25, 5, uniform=True)
    tree = build_optimal_tree(dist)
    assert tree == balanced_tree(5)
    assert expected_comparisons(tree, dist) == 5.0


def test_point_mass():
    p = np.zeros(32)
    p[0] = 1.0
    tree = build_optimal_tree(MavDistribution(p))
    assert tree.leaf_depths()[0] == 1
    assert expected_comparisons(tree, MavDistribution(p)) == pytest.approx(1.0)


def test_balanced_any_distribution():
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = rng.random(32)
        assert expected_comparisons(balanced_tree(5), MavDistribution(p / p.sum())) == pytest.approx(5.0)


def test_depth_one_leaf():
    tree = SearchTree(Node(1, 0, Node(2, 1, Node(3, 2, 3))), 2)
    assert expected_comparisons(tree, MavDistribution(np.array([1.0, 0, 0, 0]))) == 1.0


@given(dists)
def test_text_round_trip(dist):
    tree = build_optimal_tree(dist)
    assert SearchTree.from_text(tree.to_text()) == tree


@given(dists)
def test_optimal_never_worse_than_balanced(dist):
    assert (expected_comparisons(build_optimal_tree(dist), dist)
            <= expected_comparisons(balanced_tree(dist.bits), dist) + 1e-12)


@given(dists, st.integers(0, 7))
def test_path_consistent_with_depths(dist, code):
    tree = build_optimal_tree(dist)
    code %= 2**tree.bits
    assert len(tree.path(code)) == tree.leaf_depths()[code]


@pytest.mark.parametrize("text", ["(1 0)", "(2 0 1)", "(1 1 0)", "(1 0 1) 2", "(x 0 1)", "", "(1 0 1 2)"])
def test_malformed_trees_rejected(text):
    with pytest.raises(TreeStructureError):
        SearchTree.from_text(text)


def test_missing_leaf_rejected():
    with pytest.raises(TreeStructureError):
        SearchTree(Node(1, 0, Node(2, 2, 3)), 2)

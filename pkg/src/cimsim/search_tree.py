"""MAV code distributions and expected-comparison-optimal alphabetic trees.

An internal node with threshold ``t`` asks "code >= t?" (one comparator
firing against the reference for ``t``): a 0 goes left, a 1 goes right.
Leaves are output codes, and an in-order walk visits 0 .. 2^b - 1.

Text form, used for export/import::

    tree := leaf | "(" threshold " " tree " " tree ")"
    leaf := decimal code
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats


class TreeStructureError(ValueError):
    pass


@dataclass(frozen=True)
class MavDistribution:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        n = p.size
        if p.ndim != 1 or n < 2 or n & (n - 1):
            raise ValueError("distribution length must be a power of two >= 2")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def bits(self) -> int:
        return self.probabilities.size.bit_length() - 1

    def entropy(self) -> float:
        p = self.probabilities[self.probabilities > 0]
        return float(-np.sum(p * np.log2(p)))


def mav_distribution_binomial(n_cols: int, p_discharge: float, bits: int,
                              uniform: bool = False) -> MavDistribution:
    """Code distribution when each column discharges independently.

    The code is the discharged-column count k; k >= 2^b - 1 piles onto the
    top code, matching controller saturation.
    """
    n = 2**bits
    if uniform:
        return MavDistribution(np.full(n, 1.0 / n))
    if not 0 <= p_discharge <= 1:
        raise ValueError("p_discharge must be a probability")
    if n > n_cols:
        raise ValueError(f"2^{bits} codes exceed {n_cols} columns")
    k = np.arange(n - 1)
    probs = np.empty(n)
    probs[:-1] = stats.binom.pmf(k, n_cols, p_discharge)
    probs[-1] = stats.binom.sf(n - 2, n_cols, p_discharge)
    return MavDistribution(probs / probs.sum())


def empirical_distribution(samples, bits: int, smoothing: float = 1.0) -> MavDistribution:
    """Laplace-smoothed relative code frequencies."""
    codes = np.asarray(samples, dtype=np.int64).ravel()
    if codes.size == 0:
        raise ValueError("need at least one sample")
    n = 2**bits
    if codes.min() < 0 or codes.max() >= n:
        raise ValueError(f"codes must lie in [0, {n})")
    counts = np.bincount(codes, minlength=n) + smoothing
    return MavDistribution(counts / counts.sum())


@dataclass(frozen=True)
class Node:
    threshold: int
    left: "Tree"
    right: "Tree"


Tree = Union[Node, int]


@dataclass(frozen=True)
class SearchTree:
    root: Tree
    bits: int

    def __post_init__(self):
        leaves = self.leaves()
        if leaves != list(range(2**self.bits)):
            raise TreeStructureError("in-order leaves must be 0..2^bits-1 exactly once")
        _check_thresholds(self.root)

    def leaves(self) -> list[int]:
        out: list[int] = []

        def walk(t):
            if isinstance(t, Node):
                walk(t.left)
                walk(t.right)
            else:
                out.append(int(t))

        walk(self.root)
        return out

    def leaf_depths(self) -> np.ndarray:
        depths = np.zeros(2**self.bits, dtype=np.int64)
        stack = [(self.root, 0)]
        while stack:
            t, d = stack.pop()
            if isinstance(t, Node):
                stack.append((t.left, d + 1))
                stack.append((t.right, d + 1))
            else:
                depths[t] = d
        return depths

    def path(self, code: int) -> list[int]:
        """Thresholds visited on the way to `code`'s leaf."""
        out, t = [], self.root
        while isinstance(t, Node):
            out.append(t.threshold)
            t = t.right if code >= t.threshold else t.left
        return out

    def to_text(self) -> str:
        def fmt(t):
            if isinstance(t, Node):
                return f"({t.threshold} {fmt(t.left)} {fmt(t.right)})"
            return str(t)

        return fmt(self.root)

    @classmethod
    def from_text(cls, text: str) -> SearchTree:
        tokens = re.findall(r"\(|\)|\d+|\S", text)
        pos = 0

        def parse():
            nonlocal pos
            if pos >= len(tokens):
                raise TreeStructureError("unexpected end of tree text")
            tok = tokens[pos]
            pos += 1
            if tok == "(":
                if pos >= len(tokens) or not tokens[pos].isdigit():
                    raise TreeStructureError("expected threshold after '('")
                thr = int(tokens[pos])
                pos += 1
                left, right = parse(), parse()
                if pos >= len(tokens) or tokens[pos] != ")":
                    raise TreeStructureError("expected ')'")
                pos += 1
                return Node(thr, left, right)
            if tok.isdigit():
                return int(tok)
            raise TreeStructureError(f"unexpected token {tok!r}")

        root = parse()
        if pos != len(tokens):
            raise TreeStructureError("trailing tokens after tree")
        n_leaves = sum(1 for t in tokens if t.isdigit()) - sum(1 for t in tokens if t == "(")
        if n_leaves < 2 or n_leaves & (n_leaves - 1):
            raise TreeStructureError("leaf count must be a power of two >= 2")
        return cls(root, n_leaves.bit_length() - 1)

    def arrays(self):
        """Flattened (threshold, left, right) arrays for vectorized walks.

        Children are node indices when >= 0 and encode leaf codes as
        ``-1 - code`` otherwise.
        """
        thr, left, right = [], [], []

        def add(t) -> int:
            if not isinstance(t, Node):
                return -1 - int(t)
            i = len(thr)
            thr.append(t.threshold)
            left.append(0)
            right.append(0)
            left[i] = add(t.left)
            right[i] = add(t.right)
            return i

        root = add(self.root)
        return root, np.array(thr), np.array(left), np.array(right)


def _check_thresholds(t: Tree) -> tuple[int, int]:
    if not isinstance(t, Node):
        return t, t
    lo, lmax = _check_thresholds(t.left)
    rmin, hi = _check_thresholds(t.right)
    if not lmax < t.threshold == rmin:
        raise TreeStructureError(
            f"threshold {t.threshold} does not separate [{lo},{lmax}] from [{rmin},{hi}]")
    return lo, hi


def balanced_tree(bits: int) -> SearchTree:
    def build(lo, hi):
        if hi - lo == 1:
            return lo
        mid = (lo + hi) // 2
        return Node(mid, build(lo, mid), build(mid, hi))

    return SearchTree(build(0, 2**bits), bits)


def build_optimal_tree(dist: MavDistribution) -> SearchTree:
    """Exact O(n^3) interval DP over alphabetic trees.

    Ties (within float round-off) go to the smallest root threshold.
    """
    p = dist.probabilities
    n = p.size
    prefix = np.concatenate([[0.0], np.cumsum(p)])
    cost = np.zeros((n, n))
    split = np.zeros((n, n), dtype=np.int64)
    for length in range(2, n + 1):
        for i in range(n - length + 1):
            j = i + length - 1
            cand = cost[i, i:j] + cost[i + 1:j + 1, j]
            best = cand.min()
            r = int(np.flatnonzero(cand <= best + 1e-12 * max(1.0, best))[0])
            split[i, j] = i + r
            cost[i, j] = cand[r] + prefix[j + 1] - prefix[i]

    def build(i, j):
        if i == j:
            return i
        r = split[i, j]
        return Node(int(r) + 1, build(i, r), build(r + 1, j))

    return SearchTree(build(0, n - 1), dist.bits)


def expected_comparisons(tree: SearchTree, dist: MavDistribution) -> float:
    if dist.probabilities.size != 2**tree.bits:
        raise TreeStructureError("tree and distribution cover different code spaces")
    return float(np.dot(dist.probabilities, tree.leaf_depths()))

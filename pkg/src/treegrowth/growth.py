"""Forward dynamics: Marchal's growth, radix-sort (PATRICIA) trees and the line chain."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .ip_tree import (
    DEFAULT_PREFIX_BUDGET,
    BoundaryMeasure,
    IpTree,
    LazyWord,
    SeparationBudgetError,
    validate_ip,
)
from .plane_tree import (
    LabelledPlaneTree,
    PlaneTree,
    labelled_from_children,
    single_edge,
)
from .rng import derive_seed


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 1.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    return alpha


# Marchal's algorithm -------------------------------------------------------

@dataclass(frozen=True)
class MarchalWeights:
    edges: dict[int, float]        # vertex -> weight of the edge into it
    branchpoints: dict[int, float]  # vertex -> weight, for vertices with >= 2 children

    @property
    def total(self) -> float:
        return sum(self.edges.values()) + sum(self.branchpoints.values())


def marchal_weights(tree: PlaneTree, alpha: float) -> MarchalWeights:
    """Edge weight alpha-1; a branchpoint of degree k gets k-1-alpha."""
    alpha = check_alpha(alpha)
    deg = tree.degrees
    edges = {v: alpha - 1.0 for v in range(1, len(deg))}
    # a non-root vertex with c children has degree c + 1
    branch = {v: deg[v] - alpha for v in range(1, len(deg)) if deg[v] >= 2}
    return MarchalWeights(edges, branch)


def split_edge(tree: PlaneTree, vertex: int, left: bool) -> PlaneTree:
    """Subdivide the edge into ``vertex`` and hang a new leaf on the new vertex."""
    if not 0 < vertex < len(tree):
        raise IndexError("edge must be given by a non-root vertex")
    children = [list(c) for c in tree.children]
    mid, leaf = len(children), len(children) + 1
    p = tree.parent[vertex]
    children[p][children[p].index(vertex)] = mid
    children.append([leaf, vertex] if left else [vertex, leaf])
    children.append([])
    return PlaneTree.from_children(children)


def insert_at_branchpoint(tree: PlaneTree, vertex: int, gap: int) -> PlaneTree:
    """Add a leaf child to ``vertex`` in gap ``gap`` (0 = leftmost) of its children."""
    children = [list(c) for c in tree.children]
    if not 0 <= gap <= len(children[vertex]):
        raise IndexError("gap out of range")
    children[vertex].insert(gap, len(children))
    children.append([])
    return PlaneTree.from_children(children)


def marchal_outcomes(tree: PlaneTree, alpha) -> list[tuple[Fraction, PlaneTree]]:
    """Every elementary move with its exact probability."""
    a = Fraction(alpha)
    check_alpha(float(a))
    deg = tree.degrees
    moves: list[tuple[Fraction, PlaneTree]] = []
    for v in range(1, len(deg)):
        w = (a - 1) / 2
        moves.append((w, split_edge(tree, v, True)))
        moves.append((w, split_edge(tree, v, False)))
    for v in range(1, len(deg)):
        c = deg[v]
        if c >= 2 and c - a > 0:
            w = (c - a) / (c + 1)
            for g in range(c + 1):
                moves.append((w, insert_at_branchpoint(tree, v, g)))
    total = sum(w for w, _ in moves)
    return [(w / total, t) for w, t in moves]


def marchal_law(n: int, alpha) -> dict[PlaneTree, Fraction]:
    """Exact law of the n-leaf tree of the Marchal chain, by enumeration."""
    law = {single_edge(): Fraction(1)}
    for _ in range(1, n):
        nxt: dict[PlaneTree, Fraction] = {}
        for tree, p in law.items():
            for q, t in marchal_outcomes(tree, alpha):
                nxt[t] = nxt.get(t, Fraction(0)) + p * q
        law = nxt
    return law


def marchal_step(tree: PlaneTree, alpha: float, rng) -> PlaneTree:
    """One growth step drawn with a numpy Generator."""
    alpha = check_alpha(alpha)
    deg = tree.degrees
    n_edges = len(deg) - 1
    branch = [(v, deg[v] - alpha) for v in range(1, len(deg)) if deg[v] >= 2 and deg[v] > alpha]
    total = n_edges * (alpha - 1.0) + sum(w for _, w in branch)
    u = rng.random() * total
    side = rng.random()
    if u < n_edges * (alpha - 1.0):
        vertex = 1 + min(int(u / (alpha - 1.0)), n_edges - 1)
        return split_edge(tree, vertex, side < 0.5)
    u -= n_edges * (alpha - 1.0)
    for v, w in branch:
        if u < w:
            break
        u -= w
    c = deg[v]
    return insert_at_branchpoint(tree, v, min(int(side * (c + 1)), c))


def marchal_chain(n: int, alpha: float, seed: int) -> list[PlaneTree]:
    """T_1..T_n of one Marchal run."""
    alpha = check_alpha(alpha)
    if n < 1:
        raise ValueError("n must be positive")
    return [PlaneTree(d) for d in kernels.marchal_grow(n, alpha, seed, range(1, n + 1))]


def marchal_tree(n: int, alpha: float, seed: int) -> PlaneTree:
    alpha = check_alpha(alpha)
    return PlaneTree(kernels.marchal_grow(n, alpha, seed, [n])[0])


def mean_depths(ns: Sequence[int], alpha: float, reps: int, seed: int) -> np.ndarray:
    """Mean root-to-leaf edge counts, shape (reps, len(ns)); one growth per replicate."""
    alpha = check_alpha(alpha)
    ns = sorted(int(k) for k in ns)
    out = np.empty((reps, len(ns)))
    for r in range(reps):
        snaps = kernels.marchal_grow(ns[-1], alpha, derive_seed(seed, r), ns)
        out[r] = [kernels.mean_leaf_depth(d) for d in snaps]
    return out


def depth_exponent(ns: Sequence[int], depths: np.ndarray) -> float:
    """Least-squares slope of log mean depth against log n."""
    y = np.log(np.asarray(depths).mean(axis=0))
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), y, 1)[0])


# radix-sort trees ----------------------------------------------------------

class WordStream:
    """Infinite i.i.d. words; word i is reproducible from (seed, i)."""

    def __init__(self, measure: BoundaryMeasure, seed: int, budget: int = DEFAULT_PREFIX_BUDGET):
        self.measure = measure
        self.seed = int(seed)
        self.budget = budget
        self._cache: dict[int, LazyWord] = {}

    @property
    def ell(self) -> int:
        return self.measure.ell

    def word(self, i: int) -> LazyWord:
        if i not in self._cache:
            self._cache[i] = LazyWord(self.measure, derive_seed(self.seed, i), budget=self.budget)
        return self._cache[i]

    def words(self, n: int) -> list[LazyWord]:
        return [self.word(i) for i in range(n)]


def _symbol(word, k: int) -> int:
    if isinstance(word, LazyWord):
        return word.symbol(k)
    if k >= len(word):
        raise ValueError("finite words must not be prefixes of one another")
    return int(word[k])


def radix_labelled(words: Sequence, budget: int = DEFAULT_PREFIX_BUDGET) -> LabelledPlaneTree:
    """Radix-sort tree of the words; leaf of word i carries label i+1."""
    n = len(words)
    if n == 0:
        raise ValueError("need at least one word")
    children: list[list[int]] = [[]]  # node 0 is the planted root
    labels: dict[int, list[int]] = {}
    stack = [(list(range(n)), 0, 0)]  # (word indices, depth, parent node)
    while stack:
        group, depth, parent = stack.pop()
        node = len(children)
        children.append([])
        children[parent].append(node)
        if len(group) == 1:
            labels[node] = [group[0] + 1]
            continue
        while True:
            if depth >= budget:
                raise SeparationBudgetError(f"words agree on their first {budget} symbols")
            parts: dict[int, list[int]] = {}
            for i in group:
                parts.setdefault(_symbol(words[i], depth), []).append(i)
            depth += 1
            if len(parts) > 1:
                break
        # push in reverse so that children are created left to right
        for z in sorted(parts, reverse=True):
            stack.append((parts[z], depth, node))
    return labelled_from_children(children, labels)


def radix_tree(words: Sequence, budget: int = DEFAULT_PREFIX_BUDGET) -> PlaneTree:
    return radix_labelled(words, budget).tree


def patricia_labelled_chain(measure: BoundaryMeasure, n: int, seed: int,
                            budget: int = DEFAULT_PREFIX_BUDGET) -> list[LabelledPlaneTree]:
    words = WordStream(measure, seed, budget).words(n)
    return [radix_labelled(words[:k], budget) for k in range(1, n + 1)]


def patricia_chain(ell: int, measure: BoundaryMeasure | None, n: int, seed: int,
                   budget: int = DEFAULT_PREFIX_BUDGET) -> list[PlaneTree]:
    """T_k = radix tree of the first k i.i.d. words."""
    measure = measure or BoundaryMeasure.uniform(ell)
    if measure.ell != ell:
        raise ValueError("alphabet size does not match the measure")
    return [lt.tree for lt in patricia_labelled_chain(measure, n, seed, budget)]


def line_chain(tree: IpTree, n: int, seed: int) -> list[PlaneTree]:
    """Chain of a line-shaped IP-tree, grown by the general sampler."""
    from .sampler import grow_chain

    if not tree.is_interval():
        raise ValueError("line_chain needs a path-shaped IP-tree without boundary blocks")
    problems = validate_ip(tree)
    if problems:
        raise ValueError("invalid IP-tree: " + "; ".join(problems))
    return grow_chain(tree, n, seed).trees

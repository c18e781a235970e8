"""Dendritic systems of leaf-labelled plane trees, descendant ultrametrics and coalescents.

Labels are 1..n. A system stores, for every ordered label pair, the id of its
class; the genealogical order on classes as a reflexive boolean matrix; and
the planarity function on leaf pairs. Values on other classes are derived
from leaf values and the order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .ip_tree import IpTree, TreePoint
from .plane_tree import LabelledPlaneTree, PlaneTree


class AxiomError(ValueError):
    """A dendritic system violates one of its axioms."""


def _canonical(pair_class: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Renumber classes by first appearance in row-major order; returns (new ids, old of new)."""
    flat = pair_class.ravel()
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    old_of_new = uniq[np.argsort(first, kind="stable")]
    return rank[inverse].reshape(pair_class.shape), old_of_new


class DendriticSystem:
    """Finite planar dendritic system on labels 1..n."""

    __slots__ = ("pair_class", "order", "p_leaf")

    def __init__(self, pair_class, order, p_leaf, canonical: bool = False):
        pc = np.asarray(pair_class, dtype=np.int64)
        order = np.asarray(order, dtype=bool)
        p = np.asarray(p_leaf, dtype=np.int8)
        n = pc.shape[0]
        if pc.shape != (n, n) or p.shape != (n, n):
            raise ValueError("pair classes and planarity must be n x n")
        if not canonical:
            pc, old = _canonical(pc)
            order = order[np.ix_(old, old)]
        if order.shape != (int(pc.max()) + 1,) * 2:
            raise ValueError("order matrix does not match the number of classes")
        self.pair_class = pc
        self.order = order
        self.p_leaf = p

    @property
    def n(self) -> int:
        return self.pair_class.shape[0]

    @property
    def n_classes(self) -> int:
        return self.order.shape[0]

    def cls(self, i: int, j: int) -> int:
        return int(self.pair_class[i - 1, j - 1])

    def precedes(self, a: tuple[int, int], b: tuple[int, int]) -> bool:
        return bool(self.order[self.cls(*a), self.cls(*b)])

    def equivalent(self, a: tuple[int, int], b: tuple[int, int]) -> bool:
        return self.cls(*a) == self.cls(*b)

    def p(self, i: int, j: int) -> int:
        return int(self.p_leaf[i - 1, j - 1])

    def class_representatives(self) -> np.ndarray:
        """For each class, a 0-based label i with class <= (i, i)."""
        rep = np.empty(self.n_classes, dtype=np.int64)
        rows = np.repeat(np.arange(self.n), self.n)
        rep[self.pair_class.ravel()[::-1]] = rows[::-1]
        return rep

    def class_p(self) -> np.ndarray:
        """Planarity on all classes, derived from leaf values and the order."""
        rep = self.class_representatives()
        comparable = self.order | self.order.T
        out = self.p_leaf[np.ix_(rep, rep)].copy()
        out[comparable] = 0
        return out

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DendriticSystem)
            and np.array_equal(self.pair_class, other.pair_class)
            and np.array_equal(self.order, other.order)
            and np.array_equal(self.p_leaf, other.p_leaf)
        )

    def __hash__(self) -> int:
        return hash((self.pair_class.tobytes(), self.order.tobytes(), self.p_leaf.tobytes()))

    def __repr__(self) -> str:
        return f"DendriticSystem(n={self.n}, classes={self.n_classes})"

    def to_json(self) -> dict:
        return {
            "pair_class": self.pair_class.tolist(),
            "order": self.order.astype(int).tolist(),
            "p": self.p_leaf.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DendriticSystem":
        return cls(obj["pair_class"], obj["order"], obj["p"])


def from_labelled_tree(lt: LabelledPlaneTree) -> DendriticSystem:
    """Classes are mrca vertices, the order is ancestry, p is left-to-right leaf order."""
    tree = lt.tree
    where = lt.leaf_of_label()
    n = len(where)
    if sorted(where) != list(range(1, n + 1)):
        raise ValueError("leaf labels must be exactly 1..n")
    deg = tree.degrees
    for v, labs in lt.labels.items():
        if deg[v] != 0 or len(labs) != 1:
            raise ValueError("every label must sit alone on a leaf")
    if tree.n_leaves() != n:
        raise ValueError("unlabelled leaves present")
    leaf_label = [0] * len(deg)
    for v, labs in lt.labels.items():
        (leaf_label[v],) = labs
    pc, order, p = kernels.dendritic_from_tree(deg, leaf_label)
    return DendriticSystem(pc, order, p, canonical=True)


_MESSAGES = {
    "C1sym": "C1: ({a},{b}) and ({b},{a}) lie in different classes",
    "C1leaf": "C1: leaf {a} shares its class with an earlier leaf",
    "C1pair": "C1: the pair ({a},{b}) of distinct labels shares a class with a leaf",
    "C2": "C2: ({a},{b}) does not precede ({a},{a})",
    "C3refl": "C3: order is not reflexive at class {A}",
    "C3anti": "C3: distinct classes {A} and {B} precede each other",
    "C3trans": "C3: order is not transitive on classes {A}, {B}, {C}",
    "C4": "C4: no minimum among the pairs of labels {a},{b},{c},{d}",
    "P1leaf": "P1: p is not antisymmetric on leaves {a},{b}",
    "P2leaf": "P2: p vanishes on the distinct leaves {a},{b} or not on a leaf with itself",
    "P1": "P1: derived p is not antisymmetric on classes {A},{B}",
    "P2": "P2: derived p vanishes on incomparable classes {A},{B}",
    "P3": "P3: p(x,y)=p(y,z)=1 but p(x,z)!=1 for classes {A},{B},{C}",
    "P4": "P4: p(x,y)=1 and y<=z but p(x,z)!=1 for classes {A},{B},{C}",
}


def check_axioms(d: DendriticSystem) -> list[str]:
    """Every violated axiom, each message starting with its name.

    Labels in messages are 1-based, classes are 0-based ids.
    """
    out = []
    for code, a, b, c, e in kernels.dendritic_violations(d.pair_class, d.order, d.p_leaf):
        out.append(_MESSAGES[code].format(a=a + 1, b=b + 1, c=c + 1, d=e + 1, A=a, B=b, C=c))
    return out


def to_labelled_tree(d: DendriticSystem, validate: bool = True) -> LabelledPlaneTree:
    """Inverse of :func:`from_labelled_tree`; the root gets a planted edge."""
    if validate:
        problems = check_axioms(d)
        if problems:
            raise AxiomError(problems[0])
    built = kernels.dendritic_to_tree(d.pair_class, d.order, d.p_leaf)
    if built is None:
        raise AxiomError("C4: no unique minimal class")
    degrees, labels = built
    return LabelledPlaneTree(PlaneTree(degrees), {v: frozenset((l,)) for v, l in labels.items()})


def permute(d: DendriticSystem, sigma: Sequence[int]) -> DendriticSystem:
    """System whose pair (i, j) behaves like (sigma(i), sigma(j)) of ``d``.

    ``sigma[i - 1]`` is the image of label i.
    """
    s = np.asarray(sigma, dtype=np.int64) - 1
    if sorted(s.tolist()) != list(range(d.n)):
        raise ValueError("sigma must be a permutation of the labels")
    return DendriticSystem(d.pair_class[np.ix_(s, s)], d.order, d.p_leaf[np.ix_(s, s)])


def restrict(d: DendriticSystem, m: int) -> DendriticSystem:
    """Drop labels above m."""
    if not 1 <= m <= d.n:
        raise ValueError("restriction size out of range")
    pc = d.pair_class[:m, :m]
    used = np.unique(pc)
    remap = np.full(d.n_classes, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return DendriticSystem(remap[pc], d.order[np.ix_(used, used)], d.p_leaf[:m, :m])


def inverse_permutation(sigma: Sequence[int]) -> list[int]:
    inv = [0] * len(sigma)
    for i, s in enumerate(sigma, 1):
        inv[s - 1] = i
    return inv


# descendant ultrametric -------------------------------------------------------

class LeafIndex:
    """Constant-time leaf counts below the mrca of two labelled leaves."""

    def __init__(self, lt: LabelledPlaneTree):
        self.tree = lt.tree
        self.where = lt.leaf_of_label()
        self.parent = lt.tree.parent
        self.depth = lt.tree.depths()
        deg = lt.tree.degrees
        count = [1 if d == 0 else 0 for d in deg]
        for v in range(len(deg) - 1, 0, -1):
            count[self.parent[v]] += count[v]
        self.count = count
        self.n = count[0]

    def mrca(self, i: int, j: int) -> int:
        a, b = self.where[i], self.where[j]
        while self.depth[a] > self.depth[b]:
            a = self.parent[a]
        while self.depth[b] > self.depth[a]:
            b = self.parent[b]
        while a != b:
            a, b = self.parent[a], self.parent[b]
        return a

    def estimate(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        if self.n <= 2:
            raise ValueError("the estimator needs at least three labels")
        return (self.count[self.mrca(i, j)] - 2) / (self.n - 2)


def ultrametric_estimate(chain, i: int, j: int) -> float:
    """Fraction of the other labels descending from the class of (i, j) in T_N.

    ``chain`` is the labelled tree T_N, a list ending with it, or a :class:`LeafIndex`.
    """
    if isinstance(chain, LeafIndex):
        index = chain
    else:
        lt = chain[-1] if isinstance(chain, (list, tuple)) else chain
        index = LeafIndex(lt)
    for k in (i, j):
        if k not in index.where:
            raise IndexError(f"label {k} not present")
    return index.estimate(i, j)


def ultrametric_exact(tree: IpTree, xi: TreePoint, xj: TreePoint, same_label: bool = False) -> float:
    """Fringe mass of the mrca of two sample points (0 for a label with itself)."""
    if same_label:
        return 0.0
    return float(tree.fringe_mass(tree.mrca(xi, xj)))


def ultrametric_matrix(tree: IpTree, points: Sequence[TreePoint]) -> np.ndarray:
    n = len(points)
    tree.separate(points)
    d = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            d[a, b] = d[b, a] = ultrametric_exact(tree, points[a], points[b])
    return d


def check_ultrametric(d, tol: float = 1e-12) -> list[str]:
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    out = []
    if d.shape != (n, n) or not np.allclose(d, d.T, atol=0):
        out.append("matrix is not symmetric")
        return out
    if np.any(np.diagonal(d) != 0):
        out.append("diagonal is not zero")
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] <= 0):
        out.append("distinct labels at distance zero")
    for k in range(n):
        viol = d > np.maximum(d[:, k][:, None], d[k, :][None, :]) + tol
        if viol.any():
            i, j = np.argwhere(viol)[0]
            out.append(f"ultrametric inequality fails for ({i + 1},{j + 1}) through {k + 1}")
            break
    return out


@dataclass
class CoalescentTree:
    """Single-linkage merge tree of an ultrametric; node 0..n-1 are the labels."""

    clusters: list[frozenset[int]]
    heights: list[float]
    parent: list[int]

    @property
    def n(self) -> int:
        return sum(1 for c in self.clusters if len(c) == 1)

    def merge_height(self, a: int, b: int) -> float:
        """H: height of the first cluster containing both nodes."""
        anc = set()
        x = a
        while x >= 0:
            anc.add(x)
            x = self.parent[x]
        x = b
        while x not in anc:
            x = self.parent[x]
        return self.heights[x]

    def distance(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        return self.merge_height(a, b) - (self.heights[a] + self.heights[b]) / 2.0

    def leaf_distances(self) -> np.ndarray:
        n = self.n
        return np.array([[self.distance(a, b) for b in range(n)] for a in range(n)])

    def leaf_space(self):
        from .metric import FiniteMMSpace

        n = self.n
        return FiniteMMSpace(self.leaf_distances(), np.full(n, 1.0 / n))

    def label_clusters(self) -> set[frozenset[int]]:
        """Clusters as sets of 1-based labels."""
        return {frozenset(i + 1 for i in c) for c in self.clusters}


def coalescent_tree(d) -> CoalescentTree:
    """Equivalence classes of i ~_t j iff d(i, j) <= t over the finite set of thresholds."""
    d = np.asarray(d, dtype=float)
    problems = check_ultrametric(d)
    if problems:
        raise ValueError(problems[0])
    n = d.shape[0]
    clusters: list[frozenset[int]] = [frozenset([i]) for i in range(n)]
    heights = [0.0] * n
    parent = [-1] * n
    current = list(range(n))  # label -> node of its current cluster
    for t in sorted(set(d[~np.eye(n, dtype=bool)].tolist())):
        seen: dict[frozenset[int], int] = {}
        for i in range(n):
            block = frozenset(np.flatnonzero(d[i] <= t).tolist())
            if block in seen or clusters[current[i]] == block:
                continue
            node = len(clusters)
            seen[block] = node
            clusters.append(block)
            heights.append(t)
            parent.append(-1)
            for old in {current[j] for j in block}:
                parent[old] = node
        for block, node in seen.items():
            for j in block:
                current[j] = node
    return CoalescentTree(clusters, heights, parent)


def tree_clusters(lt: LabelledPlaneTree) -> set[frozenset[int]]:
    """Label sets below every vertex (the unordered tree as a cluster system)."""
    tree = lt.tree
    below: list[set[int]] = [set() for _ in range(len(tree))]
    for v, labs in lt.labels.items():
        below[v] |= labs
    par = tree.parent
    for v in range(len(tree) - 1, 0, -1):
        below[par[v]] |= below[v]
    return {frozenset(s) for s in below}

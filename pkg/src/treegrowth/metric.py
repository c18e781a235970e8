"""Trimming, IP-rescaling, fringe discrepancies and Gromov-Prokhorov distances.

Weighted trees are compared in two representations: dense finite spaces for
the small exact computations, and parent-array trees for large trimmed trees.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from .ip_tree import (
    INF,
    IpTree,
    SeparationBudgetError,
    TreePoint,
    epsilon_partition,
    load_ip,
    parse_number,
)
from .plane_tree import LabelledPlaneTree, PlaneTree
from .rng import derive_seed
from .sampler import SampleState, Span, attach_leaves, build_span

TOP = (INF, INF)
EXACT_GP_MAX_POINTS = 5
DIST_TOL = 1e-9


# metric measure spaces -------------------------------------------------------

class FiniteMMSpace:
    """Finite rooted metric space with probability weights."""

    def __init__(self, dist, weights, root: int = 0, ids: Sequence | None = None,
                 check: bool = True):
        d = np.array([[float(parse_number(x)) if isinstance(x, str) else float(x) for x in row]
                      for row in dist], dtype=float).reshape(len(weights), len(weights))
        w = np.array([float(parse_number(x)) if isinstance(x, str) else float(x) for x in weights])
        self.dist = d
        self.weights = w
        self.root = int(root)
        self.ids = list(ids) if ids is not None else list(range(len(w)))
        if check:
            problems = self.check()
            if problems:
                raise ValueError(problems[0])

    def __len__(self) -> int:
        return len(self.weights)

    def check(self, tol: float = DIST_TOL) -> list[str]:
        d, w = self.dist, self.weights
        m = len(w)
        out = []
        if not 0 <= self.root < max(m, 1):
            out.append("root is not a point of the space")
        if (w < -tol).any():
            out.append("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            out.append(f"weights sum to {w.sum():.12g}, not 1")
        if (d < -tol).any():
            out.append("distances must be non-negative")
        if np.abs(np.diagonal(d)).max(initial=0.0) > tol:
            out.append("distance matrix has a non-zero diagonal")
        if np.abs(d - d.T).max(initial=0.0) > tol:
            out.append("distance matrix is not symmetric")
        if m and (d[:, None, :] > d[:, :, None] + d[None, :, :] + tol).any():
            i, k, j = np.argwhere(d[:, None, :] > d[:, :, None] + d[None, :, :] + tol)[0]
            out.append(f"triangle inequality fails for points {i}, {k}, {j}")
        return out

    def to_json(self) -> dict:
        return {"dist": self.dist.tolist(), "weights": self.weights.tolist(), "root": self.root}

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteMMSpace":
        return cls(obj["dist"], obj["weights"], obj.get("root", 0))

    def __repr__(self) -> str:
        return f"FiniteMMSpace({len(self)} points)"


class TreeMetricSpace:
    """Rooted weighted tree with edge lengths; vertices in preorder, vertex 0 the root."""

    def __init__(self, parent: Sequence[int], length: Sequence[float], weights: Sequence[float]):
        self.parent = [int(p) for p in parent]
        self.length = [float(x) for x in length]
        self.weights = [float(x) for x in weights]
        if self.parent[0] != -1 or any(not 0 <= p < v for v, p in enumerate(self.parent) if v):
            raise ValueError("parents must precede their children and vertex 0 must be the root")
        h = [0.0] * len(self.parent)
        depth = [0] * len(self.parent)
        for v in range(1, len(h)):
            h[v] = h[self.parent[v]] + self.length[v]
            depth[v] = depth[self.parent[v]] + 1
        self.height = h
        self.depth = depth

    def __len__(self) -> int:
        return len(self.parent)

    def lca(self, a: int, b: int) -> int:
        while self.depth[a] > self.depth[b]:
            a = self.parent[a]
        while self.depth[b] > self.depth[a]:
            b = self.parent[b]
        while a != b:
            a, b = self.parent[a], self.parent[b]
        return a

    def distance(self, a: int, b: int) -> float:
        return self.height[a] + self.height[b] - 2.0 * self.height[self.lca(a, b)]

    def to_finite(self, max_points: int = 2000) -> FiniteMMSpace:
        m = len(self)
        if m > max_points:
            raise ValueError(f"{m} points exceed the dense limit of {max_points}")
        d = np.zeros((m, m))
        for a in range(m):
            for b in range(a + 1, m):
                d[a, b] = d[b, a] = self.distance(a, b)
        return FiniteMMSpace(d, self.weights, 0)


# trimming and rescaling ------------------------------------------------------

@dataclass(frozen=True)
class TrimmedTree:
    """The tree left after removing every leaf; ``counts[v]`` leaves were attached to v."""

    tree: PlaneTree
    counts: tuple[int, ...]
    n: int

    def mass(self, v: int) -> Fraction:
        return Fraction(self.counts[v], self.n)

    @property
    def fringe_counts(self) -> list[int]:
        f = list(self.counts)
        par = self.tree.parent
        for v in range(len(f) - 1, 0, -1):
            f[par[v]] += f[v]
        return f

    def edge_counts(self) -> list[int]:
        """Length of the edge into each vertex, in units of 1/n (0 for the root)."""
        f = self.fringe_counts
        par = self.tree.parent
        return [0] + [f[par[v]] - f[v] for v in range(1, len(f))]

    def to_json(self) -> dict:
        return {"n": self.n, "degrees": list(self.tree.degrees), "counts": list(self.counts),
                "lengths": [str(Fraction(c, self.n)) for c in self.edge_counts()]}

    @classmethod
    def from_json(cls, obj: dict) -> "TrimmedTree":
        t = cls(PlaneTree(obj["degrees"]), tuple(int(c) for c in obj["counts"]), int(obj["n"]))
        if len(t.counts) != len(t.tree.degrees) or sum(t.counts) != t.n:
            raise ValueError("counts must give one entry per vertex and sum to n")
        return t


def trim(tree: PlaneTree | LabelledPlaneTree) -> TrimmedTree:
    """Remove all leaves; each leaf leaves mass 1/n on its neighbour."""
    if isinstance(tree, LabelledPlaneTree):
        tree = tree.tree
    deg = tree.degrees
    n = tree.n_leaves()
    if n < 2:
        raise ValueError("trimming needs at least two leaves")
    par = tree.parent
    new_id = [-1] * len(deg)
    degrees: list[int] = []
    for v in range(len(deg)):
        if deg[v] > 0:
            new_id[v] = len(degrees)
            degrees.append(0)
    counts = [0] * len(degrees)
    for v in range(1, len(deg)):
        p = new_id[par[v]]
        if deg[v] == 0:
            counts[p] += 1
        else:
            degrees[p] += 1
    return TrimmedTree(PlaneTree(degrees), tuple(counts), n)


def ip_rescale(t: TrimmedTree) -> TreeMetricSpace:
    """Edge lengths from differences of fringe masses."""
    return TreeMetricSpace(t.tree.parent, [c / t.n for c in t.edge_counts()],
                           [c / t.n for c in t.counts])


# the eta map and the trim correspondence ---------------------------------------

def eta_from_span(span: Span) -> list[TreePoint]:
    """Nearest ancestor of each point among the pairwise mrcas."""
    out = []
    for v in span.node_of:
        if span.children[v] or len(span.labels[v]) > 1 or span.parent[v] < 0:
            out.append(span.nodes[v])
        else:
            out.append(span.nodes[span.parent[v]])
    return out


def eta_map(tree: IpTree, points: Sequence[TreePoint]) -> list[TreePoint]:
    if len(points) < 2:
        raise ValueError("the eta map needs at least two points")
    return eta_from_span(build_span(tree, points))


def _span_counts(span: Span) -> tuple[list[int], list[int], list[int]]:
    """(parent, edge length in point counts, point count) of a span."""
    m = len(span.nodes)
    count = [len(ls) for ls in span.labels]
    fringe = list(count)
    for v in range(m - 1, 0, -1):
        fringe[span.parent[v]] += fringe[v]
    length = [0] + [fringe[span.parent[v]] - fringe[v] for v in range(1, m)]
    return span.parent, length, count


def _weighted_tree_code(parent: Sequence[int], length: Sequence[int], mass: Sequence[int],
                        table: dict) -> int:
    """Id of the rooted weighted metric tree up to isomorphism.

    Zero-length edges are contracted and massless non-root vertices of
    degree two are suppressed, so that only the metric space is compared.
    Vertices must be listed parents first; ``table`` interns subtree codes.
    """
    m = len(parent)
    rep = list(range(m))
    mass_of = [0] * m
    for v in range(m):
        if v and length[v] == 0:
            rep[v] = rep[parent[v]]
        mass_of[rep[v]] += mass[v]
    keep = [v for v in range(m) if rep[v] == v]
    par = {v: (rep[parent[v]] if v else -1) for v in keep}
    ln = {v: length[v] for v in keep}
    kids: dict[int, list[int]] = {v: [] for v in keep}
    for v in keep:
        if v:
            kids[par[v]].append(v)
    for v in keep:
        if v and mass_of[v] == 0 and len(kids[v]) == 1:
            (c,) = kids[v]
            ln[c] += ln[v]
            p = par[v]
            kids[p][kids[p].index(v)] = c
            par[c] = p
            kids[v] = []
    alive = [0]
    order = []
    while alive:
        v = alive.pop()
        order.append(v)
        alive.extend(kids[v])
    code: dict[int, int] = {}
    for v in reversed(order):
        sig = (mass_of[v], tuple(sorted((ln[c], code[c]) for c in kids[v])))
        code[v] = table.setdefault(sig, len(table))
    return code[0]


def trim_code(t: TrimmedTree, table: dict) -> int:
    return _weighted_tree_code(t.tree.parent, t.edge_counts(), t.counts, table)


def eta_code(tree: IpTree, eta: Sequence[TreePoint], table: dict) -> int:
    return _weighted_tree_code(*_span_counts(build_span(tree, eta)), table)


def check_trim_correspondence(T: PlaneTree | LabelledPlaneTree, tree: IpTree,
                              points: Sequence[TreePoint]) -> bool:
    """Whether the rescaled trim of T equals the rescaled span of the eta points."""
    if isinstance(T, LabelledPlaneTree):
        T = T.tree
    if T.n_leaves() != len(points):
        raise ValueError(f"tree has {T.n_leaves()} leaves but {len(points)} points were given")
    table: dict = {}
    return trim_code(trim(T), table) == eta_code(tree, eta_map(tree, points), table)


# fringe discrepancy -------------------------------------------------------------

def _upper_key(tree: IpTree, x: TreePoint) -> tuple:
    key = tree.key(x)
    if x.offset != INF:
        return key[:-1] + ((key[-1][0], INF), TOP, TOP)
    return key + (TOP, TOP)


def fringe_discrepancy(tree: IpTree, points: Sequence[TreePoint]) -> float:
    """sup over x of |mu(F(x)) - mu_n(F(x))|, mu_n the empirical measure.

    Along a segment mu(F(.)) is continuous and the empirical value is a step
    function, so the supremum is attained at skeleton vertices, at the
    sampled points, just past a vertex into each direction and just past each
    sampled point. Inside a boundary block the candidates are prefixes of the
    sampled words and their unsampled siblings, followed down each isolated
    word until the remaining cylinder mass cannot raise the supremum.
    """
    n = len(points)
    if n == 0:
        raise ValueError("need at least one point")
    tree.separate(points, extra=2)
    keys = sorted(tree.key(p) for p in points)
    mult = Counter(points)
    best = 0.0

    def count(lo: tuple, hi: tuple) -> int:
        return bisect.bisect_right(keys, hi) - bisect.bisect_left(keys, lo)

    def consider(mass: float, c: int) -> None:
        nonlocal best
        best = max(best, abs(mass - c / n))

    for v in range(len(tree.names)):
        x = TreePoint(v)
        consider(tree.fringe[v], count(tree.key(x), _upper_key(tree, x)))
        for ci, c in enumerate(tree.children[v]):
            lo = tree.path_key[v] + ((ci, 0.0),)
            consider(tree.seg_mass[c] + tree.fringe[c], count(lo, _upper_key(tree, TreePoint(c))))
    for p, k in mult.items():
        if p.offset == INF:
            continue
        inside = count(tree.key(p), _upper_key(tree, p))
        f = tree.fringe_mass(p)
        consider(f, inside)
        consider(f, inside - k)

    tails = []
    blocks: dict[int, list[TreePoint]] = {}
    for p in mult:
        if p.word is not None:
            blocks.setdefault(p.vertex, []).append(p)
    for v, group in blocks.items():
        mass, measure = tree.block_mass[v], tree.block[v]
        stack: list[tuple[tuple[int, ...], list[TreePoint]]] = [((), group)]
        while stack:
            w, grp = stack.pop()
            c = sum(mult[p] for p in grp)
            if w:
                consider(mass * measure.cylinder(w), c)
            if len(grp) == 1:
                tails.append((v, w, grp[0], c))
                continue
            parts: dict[int, list[TreePoint]] = {}
            for p in grp:
                parts.setdefault(p.word.symbol(len(w)), []).append(p)
            for z in range(measure.ell):
                if z in parts:
                    stack.append((w + (z,), parts[z]))
                else:
                    consider(mass * measure.cylinder(w + (z,)), 0)
    for v, w, p, c in tails:
        mass, measure = tree.block_mass[v], tree.block[v]
        consider(0.0, c)  # the boundary point itself
        while mass * measure.cylinder(w) > best:
            if len(w) >= p.word.budget:
                raise SeparationBudgetError("fringe discrepancy needs a longer word prefix")
            z = p.word.symbol(len(w))
            for s in range(measure.ell):
                if s != z:
                    consider(mass * measure.cylinder(w + (s,)), 0)
            w = w + (z,)
            consider(mass * measure.cylinder(w), c)
    return float(best)


def fringe_discrepancy_bruteforce(tree: IpTree, points: Sequence[TreePoint],
                                  candidates: Iterable[TreePoint]) -> float:
    """Same supremum over an explicit candidate list, by direct ancestry tests."""
    n = len(points)
    best = 0.0
    for x in candidates:
        c = sum(1 for p in points if tree.is_ancestor(x, p))
        best = max(best, abs(tree.fringe_mass(x) - c / n))
    return best


# distortion between the tree metric and the empirical rescaling -----------------

def span_distortion(tree: IpTree, points: Sequence[TreePoint]) -> float:
    """max over pairs of points of |d(x, y) - d_n(x, y)|.

    d is the tree's own metric, d_n the rescaling of the span of the points
    by their empirical fringe masses. Computed per mrca with the two largest
    and two smallest height defects among its subtrees.
    """
    n = len(points)
    if n < 2:
        return 0.0
    span = build_span(tree, points)
    parent, _, count = _span_counts(span)
    m = len(span.nodes)
    fringe = list(count)
    for v in range(m - 1, 0, -1):
        fringe[parent[v]] += fringe[v]
    delta = [tree.height(span.nodes[v]) - (1.0 - fringe[v] / n) for v in range(m)]
    hi = [-INF] * m
    lo = [INF] * m
    best = 0.0
    for v in range(m - 1, -1, -1):
        cand = [(hi[c], lo[c]) for c in span.children[v]]
        if count[v]:
            cand.append((delta[v], delta[v]))
        if len(cand) >= 2:
            top = sorted(h for h, _ in cand)[-2:]
            bottom = sorted(l for _, l in cand)[:2]
            best = max(best, abs(top[0] + top[1] - 2 * delta[v]),
                       abs(bottom[0] + bottom[1] - 2 * delta[v]))
        hi[v] = max((h for h, _ in cand), default=-INF)
        lo[v] = min((l for _, l in cand), default=INF)
    return float(best)


def span_distortion_bruteforce(tree: IpTree, points: Sequence[TreePoint]) -> float:
    n = len(points)

    def emp(x: TreePoint) -> float:
        return sum(1 for p in points if tree.is_ancestor(x, p)) / n

    best = 0.0
    for a, b in itertools.combinations(points, 2):
        m = tree.mrca(a, b)
        dn = 2 * emp(m) - emp(a) - emp(b)
        best = max(best, abs(tree.distance(a, b) - dn))
    return best


# Gromov-Prokhorov --------------------------------------------------------------

def _check_gp_operand(X: FiniteMMSpace) -> None:
    problems = X.check()
    if problems:
        raise ValueError("invalid metric measure space: " + problems[0])


def _missing_mass(kept: float) -> float:
    """1 - kept, with float round-off below the mass tolerance cleared."""
    gap = 1.0 - kept
    return 0.0 if gap < 1e-12 else gap


def _max_coupled_mass_cut(wx, wy, relation: Sequence[tuple[int, int]]) -> float:
    """Largest mass a coupling can put on the relation, by the min-cut formula."""
    nbrs = [set() for _ in wx]
    for i, j in relation:
        nbrs[i].add(j)
    best = INF
    for mask in range(1 << len(wx)):
        inside = [i for i in range(len(wx)) if mask >> i & 1]
        reach = set().union(*(nbrs[i] for i in inside)) if inside else set()
        value = sum(wx[i] for i in range(len(wx)) if not mask >> i & 1) + sum(wy[j] for j in reach)
        best = min(best, value)
    return float(best)


def max_coupled_mass(wx, wy, relation: Sequence[tuple[int, int]], method: str = "lp") -> float:
    """max over couplings nu of nu(relation)."""
    relation = list(relation)
    if not relation:
        return 0.0
    if method == "cut":
        return _max_coupled_mass_cut(wx, wy, relation)
    m, k = len(wx), len(wy)
    A = np.zeros((m + k, len(relation)))
    for e, (i, j) in enumerate(relation):
        A[i, e] = 1.0
        A[m + j, e] = 1.0
    res = linprog(-np.ones(len(relation)), A_ub=A, b_ub=np.concatenate([wx, wy]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"coupling LP failed: {res.message}")
    return float(-res.fun)


def _compatibility(X: FiniteMMSpace, Y: FiniteMMSpace):
    pairs = [(i, j) for i in range(len(X)) for j in range(len(Y))
             if X.weights[i] > 0 and Y.weights[j] > 0]
    I = np.array([i for i, _ in pairs], dtype=int)
    J = np.array([j for _, j in pairs], dtype=int)
    C = np.abs(X.dist[np.ix_(I, I)] - Y.dist[np.ix_(J, J)])
    return pairs, C


def gp_exact_small(X: FiniteMMSpace, Y: FiniteMMSpace, method: str = "cut") -> float:
    """Exact Gromov-Prokhorov distance of two spaces with at most five points.

    For each critical distortion level the admissible relations are the
    cliques of the compatibility graph; the best coupling mass on a maximal
    clique comes from a transport problem. The answer is bisected over the
    sorted levels, using that the missing mass only falls as the level grows.
    """
    for S in (X, Y):
        if len(S) > EXACT_GP_MAX_POINTS:
            raise ValueError(f"exact GP distance is limited to {EXACT_GP_MAX_POINTS} points, got {len(S)}")
        _check_gp_operand(S)
    pairs, C = _compatibility(X, Y)
    levels = sorted(set(np.round(C.ravel(), 12).tolist()) | {0.0})
    cache: dict[float, float] = {}

    def missing(delta: float) -> float:
        if delta not in cache:
            g = nx.Graph()
            g.add_nodes_from(range(len(pairs)))
            close = np.argwhere(np.triu(C <= delta + 1e-12, 1))
            g.add_edges_from(close.tolist())
            best = 0.0
            for clique in nx.find_cliques(g):
                rel = [pairs[c] for c in clique]
                best = max(best, max_coupled_mass(X.weights, Y.weights, rel, method))
            cache[delta] = _missing_mass(best)
        return cache[delta]

    # first level where the distortion catches up with the missing mass
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if levels[mid] >= missing(levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    best = max(levels[lo], missing(levels[lo]))
    if lo > 0:
        best = min(best, max(levels[lo - 1], missing(levels[lo - 1])))
    return min(best, 1.0)


def _prune_bound(X: FiniteMMSpace, Y: FiniteMMSpace, coupling: np.ndarray) -> float:
    """min over nested relations inside the coupling's support of max(distortion, missing mass)."""
    support = [tuple(ij) for ij in np.argwhere(coupling > 0).tolist()]
    mass = {p: float(coupling[p]) for p in support}
    best = 1.0
    alive = list(support)
    while alive:
        I = np.array([i for i, _ in alive], dtype=int)
        J = np.array([j for _, j in alive], dtype=int)
        C = np.abs(X.dist[np.ix_(I, I)] - Y.dist[np.ix_(J, J)])
        dis = float(C.max())
        kept = sum(mass[p] for p in alive)
        best = min(best, max(dis, _missing_mass(kept)))
        if dis <= 0.0:
            break
        a, b = np.unravel_index(int(np.argmax(C)), C.shape)
        drop = a if (mass[alive[a]], a) < (mass[alive[b]], b) else b
        alive.pop(drop)
    return best


def _northwest_coupling(wx: np.ndarray, wy: np.ndarray, ox: Sequence[int], oy: Sequence[int]) -> np.ndarray:
    nu = np.zeros((len(wx), len(wy)))
    rx, ry = wx.astype(float).copy(), wy.astype(float).copy()
    a = b = 0
    while a < len(ox) and b < len(oy):
        i, j = ox[a], oy[b]
        t = min(rx[i], ry[j])
        nu[i, j] += t
        rx[i] -= t
        ry[j] -= t
        if rx[i] <= 1e-15:
            a += 1
        if ry[j] <= 1e-15:
            b += 1
    return nu


def gp_upper_bound(X: FiniteMMSpace, Y: FiniteMMSpace, strategy: str = "natural",
                   coupling=None) -> float:
    """A certified upper bound on the Gromov-Prokhorov distance.

    ``natural`` uses the given coupling (a matrix, or a list mapping each
    point of X to a point of Y); ``greedy`` couples the points in order of
    their distance to the root. Both shrink the relation greedily and keep
    the best certificate.
    """
    _check_gp_operand(X)
    _check_gp_operand(Y)
    if strategy == "natural":
        if coupling is None:
            raise ValueError("the natural strategy needs a coupling or correspondence")
        nu = np.asarray(coupling, dtype=float)
        if nu.ndim == 1:
            f = nu.astype(int)
            nu = np.zeros((len(X), len(Y)))
            nu[np.arange(len(X)), f] = X.weights
        if nu.shape != (len(X), len(Y)) or (nu < -1e-12).any():
            raise ValueError("coupling has the wrong shape or negative entries")
        if np.abs(nu.sum(axis=1) - X.weights).max() > 1e-9 or np.abs(nu.sum(axis=0) - Y.weights).max() > 1e-9:
            raise ValueError("weight mismatch: the coupling does not have the spaces' weights as marginals")
        return _prune_bound(X, Y, nu)
    if strategy == "greedy":
        ox = sorted(range(len(X)), key=lambda i: (X.dist[X.root, i], i))
        oy = sorted(range(len(Y)), key=lambda j: (Y.dist[Y.root, j], j))
        return _prune_bound(X, Y, _northwest_coupling(X.weights, Y.weights, ox, oy))
    raise ValueError(f"unknown strategy {strategy!r}")


# bound between a sampled tree and its IP-tree ----------------------------------------

DEFAULT_EPS_GRID = (0.4, 0.2, 0.1, 0.05, 0.025)


def ip_gp_bound(tree: IpTree, eta: Sequence[TreePoint], eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
                distortion: float | None = None) -> float:
    """Certified bound on the GP distance between the rescaled eta span and the IP-tree.

    For each eps the eta points are grouped by the cells and heavy atoms of
    the eps-partition and coupled to the tree's mass in the same group. The
    relation pairs a point with the tree points of its group, so its
    distortion is at most the span distortion plus twice the largest group
    radius (eta points to the group root, plus eps/2 inside a cell).
    """
    n = len(eta)
    if distortion is None:
        distortion = span_distortion(tree, eta)
    mult = Counter(eta)
    best = 1.0
    for eps in eps_grid:
        part = epsilon_partition(tree, eps)
        got: dict[tuple[str, int], int] = {}
        rad: dict[tuple[str, int], float] = {}
        for p, k in mult.items():
            g = part.locate(p)
            got[g] = got.get(g, 0) + k
            if g[0] == "A":
                r = tree.height(p) - part.levels[part.cells[g[1]].level]
            else:
                r = 0.0
            rad[g] = max(rad.get(g, 0.0), r)
        coupled = 0.0
        worst = 0.0
        for g, k in got.items():
            target = part.cells[g[1]].mass if g[0] == "A" else part.atoms[g[1]][1]
            share = min(k / n, target)
            if share > 0:
                coupled += share
                inner = part.half if g[0] == "A" else 0.0
                worst = max(worst, rad[g] + inner)
        best = min(best, max(distortion + 2.0 * worst, 1.0 - coupled))
    return float(best)


# the convergence experiment ---------------------------------------------------------

CSV_FIELDS = ("n", "rep", "discrepancy", "gp_bound", "pass")


@dataclass(frozen=True)
class ExperimentRow:
    n: int
    rep: int
    discrepancy: float
    gp_bound: float
    passed: bool
    distortion: float

    def csv_row(self) -> list:
        return [self.n, self.rep, repr(self.discrepancy), repr(self.gp_bound), int(self.passed)]


def run_cell(tree: IpTree, n: int, seed: int, rep: int = 0,
             eps_grid: Sequence[float] = DEFAULT_EPS_GRID) -> ExperimentRow:
    """One replicate at size n, fully determined by ``seed``."""
    state = SampleState.draw(tree, n, seed)
    span = build_span(tree, state.points)
    T = attach_leaves(span, state, tree)
    disc = fringe_discrepancy(tree, state.points)
    dist = span_distortion(tree, state.points)
    if n >= 2:
        eta = eta_from_span(span)
        table: dict = {}
        ok = trim_code(trim(T), table) == eta_code(tree, eta, table)
        bound = ip_gp_bound(tree, eta, eps_grid)
    else:
        ok, bound = True, 1.0
    return ExperimentRow(n, rep, disc, bound, ok, dist)


def _cell_job(args) -> ExperimentRow:
    source, n, seed, rep, eps_grid = args
    return run_cell(load_ip(source), n, seed, rep, eps_grid)


def convergence_experiment(source: str, ns: Sequence[int], reps: int, seed: int,
                           threads: int = 1,
                           eps_grid: Sequence[float] = DEFAULT_EPS_GRID) -> list[ExperimentRow]:
    """Rows for every (n, rep); cell seeds are derived from (seed, n, rep)."""
    if reps < 1 or any(int(n) < 1 for n in ns):
        raise ValueError("sizes and replicate counts must be positive")
    jobs = [(source, int(n), derive_seed(seed, int(n), r), r, tuple(eps_grid))
            for n in ns for r in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_cell_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    tree = load_ip(source)
    return [run_cell(tree, n, s, r, e) for _, n, s, r, e in jobs]


def write_csv(rows: Iterable[ExperimentRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(r.csv_row())


def summarize(rows: Sequence[ExperimentRow]) -> dict[int, dict[str, float]]:
    """Per n: median discrepancy and bound, and the pass rate."""
    out: dict[int, dict[str, float]] = {}
    for n in sorted({r.n for r in rows}):
        sel = [r for r in rows if r.n == n]
        out[n] = {
            "median_discrepancy": float(np.median([r.discrepancy for r in sel])),
            "median_gp_bound": float(np.median([r.gp_bound for r in sel])),
            "pass_rate": sum(r.passed for r in sel) / len(sel),
        }
    return out


def discrepancy_envelope(n: int) -> float:
    """Heuristic 2/sqrt(n) envelope for the median discrepancy."""
    return 2.0 / math.sqrt(n)

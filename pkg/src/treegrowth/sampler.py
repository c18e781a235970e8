"""Sampling tree growth chains from an explicit IP-tree.

Points are drawn from the tree's measure, their span is turned into a plane
tree using the tree's own embedding, and leaves for labelled interior points
are attached according to the branch weights, the atom thresholds and the
auxiliary uniforms.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

from .ip_tree import INF, DecorationError, Decorations, IpTree, TreePoint
from .plane_tree import LabelledPlaneTree, PlaneTree, labelled_from_children, remove_label
from .rng import generator


@dataclass
class SampleState:
    points: list[TreePoint] = field(default_factory=list)
    uniforms: list[float] = field(default_factory=list)
    orientation: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.points) != len(self.uniforms):
            raise ValueError("need one uniform per point")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def draw(cls, tree: IpTree, n: int, seed: int) -> "SampleState":
        """Points from stream (seed, 0), uniforms from stream (seed, 1)."""
        prng = generator(seed, 0)
        urng = generator(seed, 1)
        points = [tree.sample_point(prng) for _ in range(n)]
        return cls(points, [float(u) for u in urng.random(n)])

    def prefix(self, k: int) -> "SampleState":
        return SampleState(self.points[:k], self.uniforms[:k])


@dataclass
class Span:
    """Span of the root and a list of points, as a rooted plane tree.

    ``nodes[0]`` is the root of the IP-tree; children are in planar order.
    ``labels[v]`` lists the (1-based) indices of points sitting at node v.
    """

    nodes: list[TreePoint]
    children: list[list[int]]
    parent: list[int]
    labels: list[list[int]]
    node_of: list[int]  # point index (0-based) -> node

    def to_labelled(self) -> LabelledPlaneTree:
        """The labelled plane tree of the span, planted when the root branches."""
        children = [list(c) for c in self.children]
        labels = {v: ls for v, ls in enumerate(self.labels) if ls}
        if len(children[0]) > 1:
            children.append([0])
            return labelled_from_children(children, labels, root=len(children) - 1)
        return labelled_from_children(children, labels)


def build_span(tree: IpTree, points: Sequence[TreePoint]) -> Span:
    """Virtual tree of the root, the points and their pairwise mrcas."""
    tree.separate(points)
    distinct: dict[TreePoint, int] = {}
    for p in points:
        distinct.setdefault(p, len(distinct))
    keyed = sorted(((tree.key(p), p) for p in distinct), key=lambda kp: kp[0])
    extra = [tree.mrca(a[1], b[1]) for a, b in zip(keyed, keyed[1:])]
    allpts = dict.fromkeys([TreePoint(0)] + [p for _, p in keyed] + extra)
    order = sorted(allpts, key=tree.key)
    index = {p: i for i, p in enumerate(order)}
    children: list[list[int]] = [[] for _ in order]
    parent = [-1] * len(order)
    stack: list[int] = []
    for i, p in enumerate(order):
        while stack and not tree.is_ancestor(order[stack[-1]], p):
            stack.pop()
        if stack:
            parent[i] = stack[-1]
            children[stack[-1]].append(i)
        elif i != 0:
            raise AssertionError("span root must be the tree root")
        stack.append(i)
    labels: list[list[int]] = [[] for _ in order]
    node_of = [index[p] for p in points]
    for i, v in enumerate(node_of):
        labels[v].append(i + 1)
    return Span(order, children, parent, labels, node_of)


def span_plane_tree(tree: IpTree, points: Sequence[TreePoint]) -> LabelledPlaneTree:
    return build_span(tree, points).to_labelled()


def _pendant_slots(tree: IpTree, span: Span, v: int, state: SampleState,
                   dec: Decorations, is_root: bool) -> list[tuple[int, float, int]] | None:
    """(slot, U, label) for the pendant leaves at span node v, or None if v keeps its label."""
    labs = span.labels[v]
    kids = span.children[v]
    if not labs:
        return None
    if not kids and len(labs) == 1 and not is_root:
        return None
    x = span.nodes[v]
    out = []
    if x.offset != INF:
        for i in labs:
            u = state.uniforms[i - 1]
            left = u <= tree.lambda_at(x, dec)
            out.append((0 if left else len(kids), u, i))
        return out
    if x.in_block() or tree.atom[x.vertex] <= 0:
        raise DecorationError(f"several samples or an interior sample at {x!r}, which carries no atom")
    dirs = [tree.direction(x, span.nodes[c]) for c in kids]
    for i in labs:
        u = state.uniforms[i - 1]
        thresholds = [tree.beta_at(x.vertex, d, dec) for d in dirs]
        # the leaf goes left of every subtree whose threshold is at least u
        slot = bisect.bisect_left(thresholds, u)
        out.append((slot, u, i))
    return out


def attach_leaves(span: Span, state: SampleState, tree: IpTree,
                  decorations: Decorations | None = None) -> LabelledPlaneTree:
    """Turn the span into a leaf-labelled tree with one leaf per point."""
    dec = decorations or tree.decorations
    children: list[list[int]] = [list(c) for c in span.children]
    labels: dict[int, list[int]] = {}
    for v in range(len(span.nodes)):
        slots = _pendant_slots(tree, span, v, state, dec, v == 0)
        if slots is None:
            if span.labels[v]:
                labels[v] = span.labels[v]
            continue
        kids = children[v]
        merged: list[int] = []
        slots.sort()
        k = 0
        for pos in range(len(kids) + 1):
            while k < len(slots) and slots[k][0] == pos:
                leaf = len(children)
                children.append([])
                labels[leaf] = [slots[k][2]]
                merged.append(leaf)
                k += 1
            if pos < len(kids):
                merged.append(kids[pos])
        children[v] = merged
    if len(children[0]) != 1:
        children.append([0])
        return labelled_from_children(children, labels, root=len(children) - 1)
    return labelled_from_children(children, labels)


def sample_tree(tree: IpTree, n: int, seed: int, decorations: Decorations | None = None,
                state: SampleState | None = None) -> tuple[LabelledPlaneTree, SampleState]:
    """The labelled n-leaf tree of one run."""
    state = state or SampleState.draw(tree, n, seed)
    span = build_span(tree, state.points)
    return attach_leaves(span, state, tree, decorations), state


@dataclass
class Chain:
    labelled: list[LabelledPlaneTree]
    state: SampleState

    @property
    def trees(self) -> list[PlaneTree]:
        return [lt.tree for lt in self.labelled]


def grow_chain(tree: IpTree, n: int, seed: int, decorations: Decorations | None = None,
               state: SampleState | None = None, check: bool = True) -> Chain:
    """T_1..T_n from one draw of points and uniforms.

    With ``check`` the consistency of consecutive trees under removal of the
    newest label is asserted.
    """
    state = state or SampleState.draw(tree, n, seed)
    out = []
    for k in range(1, n + 1):
        sub = state.prefix(k)
        out.append(attach_leaves(build_span(tree, sub.points), sub, tree, decorations))
    if check:
        for k in range(1, n):
            if remove_label(out[k], k + 1) != out[k - 1]:
                raise AssertionError(f"chain is inconsistent between sizes {k} and {k + 1}")
    return Chain(out, state)


def orientation(tree: IpTree, state: SampleState, i: int, j: int,
                decorations: Decorations | None = None) -> int:
    """Planarity value p(i, j) for labels i != j (1-based), computed pairwise."""
    if i == j:
        return 0
    key = (i, j)
    if key in state.orientation:
        return state.orientation[key]
    dec = decorations or tree.decorations
    x, y = state.points[i - 1], state.points[j - 1]
    ui, uj = state.uniforms[i - 1], state.uniforms[j - 1]
    if x == y:
        val = 1 if ui < uj else -1
    elif tree.is_ancestor(x, y):
        if x.offset != INF:
            val = 1 if ui <= tree.lambda_at(x, dec) else -1
        else:
            val = 1 if ui <= tree.beta_at(x.vertex, tree.direction(x, y), dec) else -1
    elif tree.is_ancestor(y, x):
        val = -orientation(tree, state, j, i, dec)
    else:
        tree.separate([x, y])
        val = 1 if tree.key(x) < tree.key(y) else -1
    state.orientation[key] = val
    state.orientation[(j, i)] = -val
    return val

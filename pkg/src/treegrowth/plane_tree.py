"""Planted plane trees in Ulam-Harris form and the uniform backward step.

A plane tree is stored through its preorder child-count sequence. Sorting the
Ulam-Harris words of a tree lexicographically lists the vertices in preorder,
so this sequence carries exactly the information of the sorted word set and
two trees are equal iff their word sets are equal. Words are derived on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

Word = tuple[int, ...]


class TreeStructureError(ValueError):
    """Raised for word sets or encodings that do not describe a plane tree."""


class TreeParseError(ValueError):
    """Raised when a text encoding cannot be decoded."""


class PlaneTree:
    """Immutable rooted plane tree.

    Vertices are addressed by their preorder index; index 0 is the root.
    """

    __slots__ = ("_deg", "_parent", "_children", "_words", "_hash")

    def __init__(self, degrees: Sequence[int]):
        deg = tuple(int(d) for d in degrees)
        if not deg:
            raise TreeStructureError("a plane tree has at least one vertex")
        open_slots = 1
        for i, d in enumerate(deg):
            if d < 0:
                raise TreeStructureError(f"negative child count at vertex {i}")
            if open_slots == 0:
                raise TreeStructureError("child-count sequence closes early")
            open_slots += d - 1
        if open_slots != 0:
            raise TreeStructureError("child-count sequence does not close")
        self._deg = deg
        self._parent: list[int] | None = None
        self._children: list[list[int]] | None = None
        self._words: list[Word] | None = None
        self._hash: int | None = None

    # construction -----------------------------------------------------

    @classmethod
    def from_words(cls, words: Iterable[Sequence[int]]) -> "PlaneTree":
        ws = {tuple(int(s) for s in w) for w in words}
        if () not in ws:
            raise TreeStructureError("word set lacks the root (empty word)")
        for w in ws:
            if any(s < 0 for s in w):
                raise TreeStructureError(f"negative symbol in word {w}")
            if w and w[:-1] not in ws:
                raise TreeStructureError(f"word {w} has no parent in the set")
            if w and w[-1] > 0 and w[:-1] + (w[-1] - 1,) not in ws:
                raise TreeStructureError(f"word {w} has no left sibling in the set")
        order = sorted(ws)
        counts = dict.fromkeys(order, 0)
        for w in order[1:]:
            counts[w[:-1]] += 1
        return cls([counts[w] for w in order])

    @classmethod
    def from_children(cls, children: Sequence[Sequence[int]], root: int = 0) -> "PlaneTree":
        """Build from adjacency lists ``children[v]`` given in planar order."""
        deg: list[int] = []
        stack = [root]
        while stack:
            v = stack.pop()
            ch = children[v]
            deg.append(len(ch))
            stack.extend(reversed(ch))
        return cls(deg)

    @classmethod
    def from_nested(cls, nested) -> "PlaneTree":
        """Build from nested lists, where ``[]`` is a leaf: ``[[[], []]]`` is the cherry."""
        deg: list[int] = []
        stack = [nested]
        while stack:
            node = stack.pop()
            deg.append(len(node))
            stack.extend(reversed(node))
        return cls(deg)

    # structure --------------------------------------------------------

    @property
    def degrees(self) -> tuple[int, ...]:
        """Preorder child counts."""
        return self._deg

    def __len__(self) -> int:
        return len(self._deg)

    def _build(self) -> None:
        parent = [-1] * len(self._deg)
        children: list[list[int]] = [[] for _ in self._deg]
        stack: list[int] = []
        for v, d in enumerate(self._deg):
            if stack:
                p = stack[-1]
                parent[v] = p
                children[p].append(v)
                if len(children[p]) == self._deg[p]:
                    stack.pop()
            if d:
                stack.append(v)
            while stack and len(children[stack[-1]]) == self._deg[stack[-1]]:
                stack.pop()
        self._parent = parent
        self._children = children

    @property
    def parent(self) -> list[int]:
        if self._parent is None:
            self._build()
        return self._parent  # type: ignore[return-value]

    @property
    def children(self) -> list[list[int]]:
        if self._children is None:
            self._build()
        return self._children  # type: ignore[return-value]

    def words(self) -> list[Word]:
        """Ulam-Harris words in preorder (equivalently, sorted)."""
        if self._words is None:
            words: list[Word] = [()] * len(self._deg)
            ch = self.children
            for v in range(len(self._deg)):
                w = words[v]
                for k, c in enumerate(ch[v]):
                    words[c] = w + (k,)
            self._words = words
        return self._words

    def word_set(self) -> frozenset[Word]:
        return frozenset(self.words())

    def leaf_nodes(self) -> list[int]:
        """Leaf vertices in planar (left-to-right) order."""
        return [v for v, d in enumerate(self._deg) if d == 0]

    def leaves(self) -> list[Word]:
        w = self.words()
        return [w[v] for v in self.leaf_nodes()]

    def n_leaves(self) -> int:
        return sum(1 for d in self._deg if d == 0)

    def depths(self) -> list[int]:
        depth = [0] * len(self._deg)
        par = self.parent
        for v in range(1, len(self._deg)):
            depth[v] = depth[par[v]] + 1
        return depth

    def subtree_end(self) -> list[int]:
        """``end[v]`` is one past the last preorder index of the subtree of v."""
        n = len(self._deg)
        end = list(range(1, n + 1))
        par = self.parent
        for v in range(n - 1, 0, -1):
            p = par[v]
            if end[v] > end[p]:
                end[p] = end[v]
        return end

    def is_planted(self) -> bool:
        return self._deg[0] == 1

    # comparison -------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PlaneTree) and self._deg == other._deg

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._deg)
        return self._hash

    def __repr__(self) -> str:
        if len(self._deg) <= 12:
            return f"PlaneTree({encode_words(self.words())})"
        return f"PlaneTree(<{len(self._deg)} vertices, {self.n_leaves()} leaves>)"


# canonical small trees ------------------------------------------------------

def single_edge() -> PlaneTree:
    """The unique element of the one-leaf class."""
    return PlaneTree([1, 0])


def star(n: int) -> PlaneTree:
    """Planted star with ``n`` leaves (the single edge for n = 1)."""
    if n == 1:
        return single_edge()
    return PlaneTree([1, n] + [0] * n)


# membership and the backward step ------------------------------------------

def validate_membership(tree: PlaneTree, n: int) -> list[str]:
    """List every violated condition for membership in the class with n leaves."""
    problems: list[str] = []
    deg = tree.degrees
    if deg[0] != 1:
        problems.append(f"root has {deg[0]} children, expected 1")
    words = tree.words()
    for v in range(1, len(deg)):
        if deg[v] == 1:
            problems.append(f"vertex {format_word(words[v])} has degree 2")
    leaves = tree.n_leaves()
    if leaves != n:
        problems.append(f"tree has {leaves} leaves, expected {n}")
    return problems


def in_class(tree: PlaneTree, n: int | None = None) -> bool:
    return not validate_membership(tree, tree.n_leaves() if n is None else n)


def backward_step(tree: PlaneTree, leaf_index: int) -> PlaneTree:
    """Remove the ``leaf_index``-th leaf (planar order) and suppress degree 2."""
    leaves = tree.leaf_nodes()
    if len(leaves) < 2:
        raise ValueError("cannot remove a leaf from a tree with a single leaf")
    if not 0 <= leaf_index < len(leaves):
        raise IndexError(f"leaf index {leaf_index} out of range 0..{len(leaves) - 1}")
    children = [list(c) for c in tree.children]
    parent = list(tree.parent)
    leaf = leaves[leaf_index]
    p = parent[leaf]
    children[p].remove(leaf)
    suppressed = 0
    if p != 0 and len(children[p]) == 1:
        only = children[p][0]
        gp = parent[p]
        siblings = children[gp]
        siblings[siblings.index(p)] = only
        parent[only] = gp
        children[p] = []
        suppressed += 1
    assert suppressed <= 1
    return PlaneTree.from_children(children)


def uniform_backward_step(tree: PlaneTree, rng) -> PlaneTree:
    """Backward step at a uniformly chosen leaf; ``rng`` is a numpy Generator."""
    n = tree.n_leaves()
    if n < 2:
        raise ValueError("cannot remove a leaf from a tree with a single leaf")
    return backward_step(tree, int(rng.integers(n)))


# enumeration ---------------------------------------------------------------

def _forests(n: int, cache: dict) -> list[list]:
    """All subtrees (nested form) with n leaves and no unary vertices."""
    if n in cache:
        return cache[n]
    out: list[list] = [[]] if n == 1 else []
    for comp in _compositions(n):
        parts = [_forests(k, cache) for k in comp]
        acc: list[list] = [[]]
        for options in parts:
            acc = [a + [o] for a in acc for o in options]
        out.extend(acc)
    cache[n] = out
    return out


def _compositions(n: int) -> Iterable[tuple[int, ...]]:
    """Compositions of n into at least two positive parts."""
    def rec(rest: int, prefix: tuple[int, ...]):
        if rest == 0:
            if len(prefix) >= 2:
                yield prefix
            return
        for k in range(1, rest + 1):
            if k == n:
                continue
            yield from rec(rest - k, prefix + (k,))
    return rec(n, ())


def enumerate_class(n: int) -> list[PlaneTree]:
    """Every planted plane tree with n leaves and no degree-2 vertex."""
    if n < 1:
        raise ValueError("n must be positive")
    return [PlaneTree.from_nested([t]) for t in _forests(n, {})]


def enumerate_plane_trees(max_vertices: int) -> list[PlaneTree]:
    """Every plane tree with at most ``max_vertices`` vertices."""
    out: list[PlaneTree] = []
    level: list[tuple[int, ...]] = [(0,)]
    seen = {(0,)}
    while level:
        out.extend(PlaneTree(d) for d in level)
        nxt: list[tuple[int, ...]] = []
        for deg in level:
            if len(deg) >= max_vertices:
                continue
            tree = PlaneTree(deg)
            words = tree.words()
            ws = set(words)
            for w in words:
                k = tree.degrees[words.index(w)]
                new = PlaneTree.from_words(ws | {w + (k,)}).degrees
                if new not in seen:
                    seen.add(new)
                    nxt.append(new)
        level = nxt
    return out


# labelled trees ------------------------------------------------------------

@dataclass(frozen=True)
class LabelledPlaneTree:
    """A plane tree with label sets on some vertices (keyed by preorder index)."""

    tree: PlaneTree
    labels: Mapping[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(v): frozenset(s) for v, s in self.labels.items() if s}
        for v in clean:
            if not 0 <= v < len(self.tree):
                raise TreeStructureError(f"label on missing vertex {v}")
        object.__setattr__(self, "labels", clean)

    def all_labels(self) -> list[int]:
        return sorted(l for s in self.labels.values() for l in s)

    def leaf_of_label(self) -> dict[int, int]:
        """Map label -> vertex for trees whose leaves carry single labels."""
        out: dict[int, int] = {}
        for v, s in self.labels.items():
            for l in s:
                out[l] = v
        return out

    def unlabelled(self) -> PlaneTree:
        return self.tree

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, LabelledPlaneTree)
            and self.tree == other.tree
            and dict(self.labels) == dict(other.labels)
        )

    def __hash__(self) -> int:
        return hash((self.tree, frozenset(self.labels.items())))


def leaf_labelled(tree: PlaneTree, labels_in_planar_order: Sequence[int]) -> LabelledPlaneTree:
    """Label the leaves of ``tree`` left to right with the given labels."""
    leaves = tree.leaf_nodes()
    if len(leaves) != len(labels_in_planar_order):
        raise ValueError("need one label per leaf")
    return LabelledPlaneTree(tree, {v: frozenset([l]) for v, l in zip(leaves, labels_in_planar_order)})


def remove_label(lt: LabelledPlaneTree, label: int) -> LabelledPlaneTree:
    """Backward step at the leaf carrying ``label``; remaining labels follow their leaves."""
    where = lt.leaf_of_label()
    leaf = where[label]
    if lt.tree.degrees[leaf] != 0 or len(lt.labels[leaf]) != 1:
        raise ValueError(f"label {label} does not sit alone on a leaf")
    tree = lt.tree
    children = [list(c) for c in tree.children]
    parent = list(tree.parent)
    p = parent[leaf]
    children[p].remove(leaf)
    if p != 0 and len(children[p]) == 1:
        if p in lt.labels:
            raise ValueError("suppressed vertex carries a label")
        only = children[p][0]
        gp = parent[p]
        children[gp][children[gp].index(p)] = only
        children[p] = []
    # relabel by walking the new preorder
    new_labels: dict[int, frozenset[int]] = {}
    order: list[int] = []
    stack = [0]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(children[v]))
    for new_index, old in enumerate(order):
        if old in lt.labels and old != leaf:
            new_labels[new_index] = lt.labels[old]
    return LabelledPlaneTree(PlaneTree.from_children(children), new_labels)


def preorder(children: Sequence[Sequence[int]], root: int = 0) -> list[int]:
    """Vertex ids of an adjacency-list tree in preorder."""
    order: list[int] = []
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(children[v]))
    return order


def labelled_from_children(children: Sequence[Sequence[int]], labels: Mapping[int, Iterable[int]],
                           root: int = 0) -> LabelledPlaneTree:
    """Labelled tree from adjacency lists whose labels are keyed by the same ids."""
    order = preorder(children, root)
    index = {v: i for i, v in enumerate(order)}
    tree = PlaneTree([len(children[v]) for v in order])
    return LabelledPlaneTree(tree, {index[v]: frozenset(s) for v, s in labels.items()})


# text encoding -------------------------------------------------------------

def format_word(word: Sequence[int]) -> str:
    """Digits for words over 0..9, otherwise each symbol prefixed by a dot."""
    if all(s < 10 for s in word):
        return "".join(str(s) for s in word)
    return "".join(f".{s}" for s in word)


def parse_word(text: str) -> Word:
    if not isinstance(text, str):
        raise TreeParseError(f"word must be a string, got {text!r}")
    if text.startswith("."):
        parts = text[1:].split(".")
        if not all(p.isdigit() for p in parts):
            raise TreeParseError(f"malformed word {text!r}")
        return tuple(int(p) for p in parts)
    if text and not text.isdigit():
        raise TreeParseError(f"malformed word {text!r}")
    return tuple(int(c) for c in text)


def encode_words(words: Iterable[Sequence[int]]) -> str:
    return json.dumps([format_word(w) for w in words])


def to_json(tree: PlaneTree, compact: bool = False):
    if compact:
        return {"degrees": list(tree.degrees)}
    return [format_word(w) for w in tree.words()]


def from_json(obj) -> PlaneTree:
    try:
        if isinstance(obj, dict) and "degrees" in obj:
            return PlaneTree(obj["degrees"])
        if isinstance(obj, list):
            return PlaneTree.from_words(parse_word(w) for w in obj)
    except TreeStructureError as exc:
        raise TreeParseError(str(exc)) from exc
    raise TreeParseError("expected a JSON array of words or an object with 'degrees'")


def encode(tree: PlaneTree, compact: bool = False) -> str:
    return json.dumps(to_json(tree, compact), separators=(",", ":"))


def decode(text: str) -> PlaneTree:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeParseError(f"not valid JSON: {exc.msg}") from exc
    return from_json(obj)


def labelled_to_json(lt: LabelledPlaneTree, compact: bool = False) -> dict:
    if compact:
        key = {v: str(v) for v in lt.labels}
    else:
        words = lt.tree.words()
        key = {v: format_word(words[v]) for v in lt.labels}
    return {
        "tree": to_json(lt.tree, compact),
        "labels": {key[v]: sorted(s) for v, s in sorted(lt.labels.items())},
    }


def labelled_from_json(obj) -> LabelledPlaneTree:
    if not isinstance(obj, dict) or "tree" not in obj:
        raise TreeParseError("labelled tree needs a 'tree' field")
    tree = from_json(obj["tree"])
    raw = obj.get("labels", {})
    labels: dict[int, frozenset[int]] = {}
    if isinstance(obj["tree"], dict):
        for k, v in raw.items():
            labels[int(k)] = frozenset(int(x) for x in v)
    else:
        index = {w: i for i, w in enumerate(tree.words())}
        for k, v in raw.items():
            w = parse_word(k)
            if w not in index:
                raise TreeParseError(f"label on unknown vertex {k!r}")
            labels[index[w]] = frozenset(int(x) for x in v)
    return LabelledPlaneTree(tree, labels)

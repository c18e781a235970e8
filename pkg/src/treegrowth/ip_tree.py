"""Finitely described interval-partition trees.

An :class:`IpTree` is a finite skeleton of segments carrying vertex atoms,
diffuse segment mass given by piecewise-linear CDFs, and optional l-ary
boundary blocks hanging from skeleton leaves. Points of the tree are
:class:`TreePoint` values. Heights inside boundary blocks are derived from
masses through the spacing identity ``d(r, x) + mu(F(x)) = 1``; skeleton
segment lengths come from the configuration and :func:`validate_ip` checks
that they agree with the masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .kernels import counter_uniform

INF = math.inf
WORD_END = (INF, INF)
MASS_TOL = 1e-9
LEVEL_SLACK = 1e-9
DEFAULT_PREFIX_BUDGET = 64


class IpStructureError(ValueError):
    """The description is not a well-formed weighted plane skeleton."""


class IpConfigError(ValueError):
    """An IP-tree configuration file could not be parsed."""


class SeparationBudgetError(RuntimeError):
    """Two boundary words agree on more symbols than the prefix budget allows."""


class DecorationError(ValueError):
    """Branch or branchpoint weights are missing or have the wrong shape."""


def parse_number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise IpConfigError(f"not a number: {text!r}") from None


# boundary measures and lazy words ------------------------------------------

@dataclass(frozen=True)
class BoundaryMeasure:
    """Product or finite-state Markov measure on infinite words over 0..ell-1."""

    ell: int
    probs: tuple[float, ...] | None = None
    initial: tuple[float, ...] | None = None
    transition: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.ell < 2:
            raise IpStructureError("a boundary block needs ell >= 2")
        if self.probs is None and self.transition is None:
            object.__setattr__(self, "probs", tuple([1.0 / self.ell] * self.ell))
        if self.probs is not None:
            if self.transition is not None or self.initial is not None:
                raise IpStructureError("give either product probs or a Markov chain, not both")
            self._check_row(self.probs, "probs")
        else:
            if self.initial is None:
                raise IpStructureError("Markov boundary measure needs an initial law")
            self._check_row(self.initial, "initial", allow_point_mass=True)
            if len(self.transition) != self.ell:
                raise IpStructureError("transition matrix must have ell rows")
            for row in self.transition:
                self._check_row(row, "transition row")

    def _check_row(self, row, what, allow_point_mass=False):
        if len(row) != self.ell:
            raise IpStructureError(f"{what} must have {self.ell} entries")
        if any(p < 0 for p in row) or abs(sum(row) - 1.0) > MASS_TOL:
            raise IpStructureError(f"{what} must be a probability vector")
        if not allow_point_mass and max(row) >= 1.0:
            # a symbol forced forever would put an atom on a boundary leaf
            raise IpStructureError(f"{what} must not be a point mass")

    @classmethod
    def uniform(cls, ell: int) -> "BoundaryMeasure":
        return cls(ell)

    def is_product(self) -> bool:
        return self.probs is not None

    def symbol_probs(self, prev: int | None) -> tuple[float, ...]:
        if self.probs is not None:
            return self.probs
        if prev is None:
            return self.initial  # type: ignore[return-value]
        return self.transition[prev]  # type: ignore[index]

    def cylinder(self, prefix: Sequence[int]) -> float:
        """Measure of all words starting with ``prefix``."""
        mass = 1.0
        prev = None
        for z in prefix:
            mass *= self.symbol_probs(prev)[z]
            prev = z
        return mass

    def draw(self, prev: int | None, u: float) -> int:
        acc = 0.0
        row = self.symbol_probs(prev)
        for z, p in enumerate(row):
            acc += p
            if u < acc:
                return z
        return max(z for z, p in enumerate(row) if p > 0)

    def describe(self) -> str:
        if self.probs is not None:
            return f"ell={self.ell} probs=" + ",".join(repr(p) for p in self.probs)
        rows = ";".join(",".join(repr(p) for p in r) for r in self.transition)  # type: ignore[union-attr]
        return f"ell={self.ell} initial=" + ",".join(repr(p) for p in self.initial) + f" transition={rows}"  # type: ignore[union-attr]


class LazyWord:
    """An infinite word whose symbols are drawn on demand from a counter stream."""

    __slots__ = ("measure", "seed", "symbols", "budget")

    def __init__(self, measure: BoundaryMeasure, seed: int, prefix: Sequence[int] = (),
                 budget: int = DEFAULT_PREFIX_BUDGET):
        self.measure = measure
        self.seed = int(seed)
        self.symbols: list[int] = [int(z) for z in prefix]
        self.budget = budget
        for z in self.symbols:
            if not 0 <= z < measure.ell:
                raise IpStructureError(f"symbol {z} outside alphabet of size {measure.ell}")

    def symbol(self, k: int) -> int:
        while len(self.symbols) <= k:
            j = len(self.symbols)
            prev = self.symbols[-1] if self.symbols else None
            self.symbols.append(self.measure.draw(prev, counter_uniform(self.seed, j, 0)))
        return self.symbols[k]

    def prefix(self, k: int) -> tuple[int, ...]:
        if k > 0:
            self.symbol(k - 1)
        return tuple(self.symbols[:k])

    def __repr__(self) -> str:
        shown = "".join(str(z) if z < 10 else f".{z}" for z in self.symbols[:16])
        return f"LazyWord({shown}...)"


def common_prefix_length(a: LazyWord, b: LazyWord, budget: int | None = None) -> int:
    limit = min(a.budget, b.budget) if budget is None else budget
    k = 0
    while k < limit:
        if a.symbol(k) != b.symbol(k):
            return k
        k += 1
    raise SeparationBudgetError(f"two boundary words agree on their first {limit} symbols")


# points --------------------------------------------------------------------

@dataclass(frozen=True)
class TreePoint:
    """A location in an :class:`IpTree`.

    ``vertex`` alone is a skeleton vertex. A finite ``offset`` places the point
    on the segment into ``vertex`` at that distance below the segment's top.
    ``prefix`` addresses a vertex of the boundary block at ``vertex``;
    a finite ``edge_height`` moves the point up the block edge into that
    prefix to the given height. ``word`` marks a boundary leaf.
    """

    vertex: int
    offset: float = INF
    prefix: tuple[int, ...] = ()
    edge_height: float = INF
    word: LazyWord | None = None

    def on_segment(self) -> bool:
        return self.offset != INF

    def in_block(self) -> bool:
        return bool(self.prefix) or self.word is not None

    def __repr__(self) -> str:
        parts = [f"v{self.vertex}"]
        if self.offset != INF:
            parts.append(f"offset={self.offset:.6g}")
        if self.prefix:
            parts.append("prefix=" + "".join(map(str, self.prefix)))
        if self.edge_height != INF:
            parts.append(f"edge_height={self.edge_height:.6g}")
        if self.word is not None:
            parts.append(repr(self.word))
        return "TreePoint(" + ", ".join(parts) + ")"


# decorations -----------------------------------------------------------------

@dataclass
class Decorations:
    """Branch weights on segments and threshold lists at atoms.

    ``lam[v]`` is a tuple of ``(start_offset, value)`` pieces on the segment
    into ``v``; ``beta[v]`` lists one threshold per plane-ordered subtree of
    the atom at ``v``.
    """

    lam: dict[int, tuple[tuple[float, float], ...]] = field(default_factory=dict)
    lam_default: float | None = None
    beta: dict[int, tuple[float, ...]] = field(default_factory=dict)


# the tree --------------------------------------------------------------------

class IpTree:
    """Explicit IP-tree. Vertex 0 is the root."""

    def __init__(
        self,
        names: Sequence[str],
        parents: Sequence[int],
        lengths: Sequence[float],
        atoms: Sequence[float],
        profiles: Sequence[Sequence[tuple[float, float]]],
        blocks: Sequence[tuple[float, BoundaryMeasure] | None] | None = None,
        decorations: Decorations | None = None,
        name: str = "",
    ):
        nv = len(names)
        if nv == 0:
            raise IpStructureError("empty skeleton")
        if not (len(parents) == len(lengths) == len(atoms) == len(profiles) == nv):
            raise IpStructureError("per-vertex fields have inconsistent lengths")
        if parents[0] != -1:
            raise IpStructureError("vertex 0 must be the root")
        self.name = name
        self.names = list(names)
        self.parent = [int(p) for p in parents]
        self.children: list[list[int]] = [[] for _ in range(nv)]
        for v in range(1, nv):
            p = self.parent[v]
            if not 0 <= p < v:
                raise IpStructureError(f"vertex {names[v]!r} must come after its parent")
            self.children[p].append(v)
        self.child_index = [0] * nv
        for p in range(nv):
            for k, c in enumerate(self.children[p]):
                self.child_index[c] = k
        self.length = [float(x) for x in lengths]
        self.atom = [float(a) for a in atoms]
        if any(a < 0 for a in self.atom):
            raise IpStructureError("atom masses must be non-negative")
        self.profile: list[list[tuple[float, float]]] = []
        for v in range(nv):
            self.profile.append(self._check_profile(v, profiles[v]))
        self.block_mass = [0.0] * nv
        self.block: list[BoundaryMeasure | None] = [None] * nv
        for v, b in enumerate(blocks or [None] * nv):
            if b is None:
                continue
            mass, measure = b
            if self.children[v]:
                raise IpStructureError(f"boundary block on non-leaf vertex {names[v]!r}")
            if mass <= 0:
                raise IpStructureError("boundary block mass must be positive")
            self.block_mass[v] = float(mass)
            self.block[v] = measure
        self.decorations = decorations or Decorations()
        self._derive()

    def _check_profile(self, v: int, prof) -> list[tuple[float, float]]:
        if v == 0:
            if prof:
                raise IpStructureError("the root has no segment")
            return []
        L = self.length[v]
        if not L > 0:
            raise IpStructureError(f"segment into {self.names[v]!r} must have positive length")
        pts = [(float(t), float(m)) for t, m in prof] if prof else [(0.0, 0.0), (L, 0.0)]
        if pts[0] != (0.0, 0.0):
            raise IpStructureError(f"profile of {self.names[v]!r} must start at 0:0")
        if abs(pts[-1][0] - L) > 1e-12:
            raise IpStructureError(f"profile of {self.names[v]!r} must end at the segment length")
        pts[-1] = (L, pts[-1][1])
        for (t0, m0), (t1, m1) in zip(pts, pts[1:]):
            if not t1 > t0 or m1 < m0:
                raise IpStructureError(f"profile of {self.names[v]!r} must be increasing in position and monotone in mass")
        return pts

    def _derive(self) -> None:
        nv = len(self.names)
        self.seg_mass = [p[-1][1] if p else 0.0 for p in self.profile]
        fringe = [0.0] * nv
        for v in range(nv - 1, -1, -1):
            f = self.atom[v] + self.block_mass[v]
            for c in self.children[v]:
                f += self.seg_mass[c] + fringe[c]
            fringe[v] = f
        self.fringe = fringe
        self.total_mass = fringe[0]
        height = [0.0] * nv
        depth = [0] * nv
        for v in range(1, nv):
            height[v] = height[self.parent[v]] + self.length[v]
            depth[v] = depth[self.parent[v]] + 1
        self.vertex_height = height
        self.depth = depth
        self.path_key: list[tuple] = [()] * nv
        for v in range(1, nv):
            self.path_key[v] = self.path_key[self.parent[v]] + ((self.child_index[v], INF),)
        tin = [0] * nv
        tout = [0] * nv
        clock = 0
        stack = [(0, False)]
        while stack:
            v, done = stack.pop()
            if done:
                tout[v] = clock
                continue
            tin[v] = clock
            clock += 1
            stack.append((v, True))
            for c in reversed(self.children[v]):
                stack.append((c, False))
        self._tin, self._tout = tin, tout
        comps = []
        for v in range(nv):
            if self.atom[v] > 0:
                comps.append(("atom", v, self.atom[v]))
            if self.seg_mass[v] > 0:
                comps.append(("segment", v, self.seg_mass[v]))
            if self.block_mass[v] > 0:
                comps.append(("block", v, self.block_mass[v]))
        self.components = comps

    # basic queries ----------------------------------------------------

    def vertex_id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no vertex named {name!r}") from None

    def point(self, name_or_id, offset: float = INF) -> TreePoint:
        v = self.vertex_id(name_or_id) if isinstance(name_or_id, str) else int(name_or_id)
        return TreePoint(v, offset=offset)

    def root(self) -> TreePoint:
        return TreePoint(0)

    def subtree_count(self, v: int) -> int:
        """Number of plane-ordered subtrees hanging below vertex v."""
        if self.block[v] is not None:
            return self.block[v].ell  # type: ignore[union-attr]
        return len(self.children[v])

    def is_interval(self) -> bool:
        """True when the skeleton is a path without boundary blocks."""
        return all(len(c) <= 1 for c in self.children) and not any(self.block_mass)

    def skeleton_ancestor(self, a: int, b: int) -> bool:
        return self._tin[a] <= self._tin[b] < self._tout[a]

    def skeleton_lca(self, a: int, b: int) -> int:
        while self.depth[a] > self.depth[b]:
            a = self.parent[a]
        while self.depth[b] > self.depth[a]:
            b = self.parent[b]
        while a != b:
            a, b = self.parent[a], self.parent[b]
        return a

    def cdf(self, v: int, t: float) -> float:
        """Diffuse mass on the segment into v between its top and offset t."""
        prof = self.profile[v]
        if t <= 0:
            return 0.0
        for (t0, m0), (t1, m1) in zip(prof, prof[1:]):
            if t <= t1:
                return m0 + (m1 - m0) * (t - t0) / (t1 - t0)
        return prof[-1][1]

    def density_right(self, v: int, t: float) -> float:
        """Slope of the profile just below offset t (towards the vertex)."""
        prof = self.profile[v]
        for (t0, m0), (t1, m1) in zip(prof, prof[1:]):
            if t0 <= t < t1:
                return (m1 - m0) / (t1 - t0)
        return 0.0

    def density_left(self, v: int, t: float) -> float:
        """Slope of the profile just above offset t (towards the root)."""
        prof = self.profile[v]
        for (t0, m0), (t1, m1) in zip(prof, prof[1:]):
            if t0 < t <= t1:
                return (m1 - m0) / (t1 - t0)
        return 0.0

    # point geometry ---------------------------------------------------

    def key(self, p: TreePoint) -> tuple:
        """Sort key realising the planar depth-first order (ancestors first).

        Keys of boundary leaves use the symbols materialized so far; call
        :meth:`separate` on a batch before comparing keys.
        """
        if p.offset != INF:
            return self.path_key[p.vertex][:-1] + ((self.child_index[p.vertex], p.offset),)
        base = self.path_key[p.vertex]
        if p.word is not None:
            return base + tuple((z, INF) for z in p.word.symbols) + (WORD_END,)
        if p.prefix:
            steps = tuple((z, INF) for z in p.prefix)
            if p.edge_height != INF:
                steps = steps[:-1] + ((p.prefix[-1], p.edge_height),)
            return base + steps
        return base

    def separate(self, points: Iterable[TreePoint], extra: int = 1) -> None:
        """Materialize boundary words until distinct words have distinct keys.

        Each word is extended to ``extra`` symbols beyond its longest common
        prefix with any other word in the same block.
        """
        by_block: dict[int, list[LazyWord]] = {}
        seen: set[int] = set()
        for p in points:
            if p.word is not None and id(p.word) not in seen:
                seen.add(id(p.word))
                by_block.setdefault(p.vertex, []).append(p.word)
        for words in by_block.values():
            for w in words:
                w.symbol(0)
            # in lexicographic order, a word whose materialized part is a
            # prefix of another's is a prefix of its right neighbour
            while True:
                words.sort(key=lambda w: w.symbols)
                changed = False
                for a, b in zip(words, words[1:]):
                    k = min(len(a.symbols), len(b.symbols))
                    if a.symbols[:k] == b.symbols[:k]:
                        if k >= min(a.budget, b.budget):
                            raise SeparationBudgetError(
                                f"two boundary words agree on their first {k} symbols")
                        a.symbol(k)
                        b.symbol(k)
                        changed = True
                if not changed:
                    break
            need = {id(w): extra for w in words}
            for a, b in zip(words, words[1:]):
                k = 0
                while a.symbols[k] == b.symbols[k]:
                    k += 1
                need[id(a)] = max(need[id(a)], k + extra)
                need[id(b)] = max(need[id(b)], k + extra)
            for w in words:
                w.symbol(need[id(w)] - 1)

    def is_ancestor(self, x: TreePoint, y: TreePoint) -> bool:
        """True iff x lies on the path from the root to y (x == y included)."""
        if x.word is not None:
            return x.word is y.word
        vx, vy = x.vertex, y.vertex
        if x.offset != INF:
            if vy == vx:
                return y.offset >= x.offset
            return self.skeleton_ancestor(vx, vy)
        if not x.prefix:
            if vy == vx:
                return y.offset == INF
            return self.skeleton_ancestor(vx, vy)
        if vy != vx or y.offset != INF:
            return False
        w = x.prefix
        k = len(w)
        if y.word is not None:
            return all(y.word.symbol(i) == w[i] for i in range(k))
        yw = y.prefix
        if len(yw) < k or yw[:k] != w:
            return False
        if len(yw) > k:
            return True
        return y.edge_height >= x.edge_height

    def _block_symbols(self, p: TreePoint, k: int) -> int:
        if p.word is not None:
            return p.word.symbol(k)
        return p.prefix[k] if k < len(p.prefix) else -1

    def mrca(self, x: TreePoint, y: TreePoint) -> TreePoint:
        if self.is_ancestor(x, y):
            return x
        if self.is_ancestor(y, x):
            return y
        vx, vy = x.vertex, y.vertex
        if vx == vy and x.offset == INF and y.offset == INF:
            if x.word is not None and y.word is not None:
                k = common_prefix_length(x.word, y.word)
            else:
                k = 0
                limit = max(len(x.prefix), len(y.prefix))
                while k < limit and self._block_symbols(x, k) == self._block_symbols(y, k):
                    k += 1
            if x.word is not None:
                prefix = x.word.prefix(k)
            elif y.word is not None:
                prefix = y.word.prefix(k)
            else:
                prefix = (x.prefix if len(x.prefix) >= k else y.prefix)[:k]
            return TreePoint(vx, prefix=prefix)
        return TreePoint(self.skeleton_lca(vx, vy))

    def fringe_mass(self, x: TreePoint) -> float:
        if x.word is not None:
            return 0.0
        v = x.vertex
        if x.offset != INF:
            return self.fringe[v] + self.seg_mass[v] - self.cdf(v, x.offset)
        if x.prefix:
            return self.block_mass[v] * self.block[v].cylinder(x.prefix)  # type: ignore[union-attr]
        return self.fringe[v]

    def branch_mass(self, x: TreePoint, direction: int) -> float:
        """Mass of the open branch leaving x downward in ``direction``.

        For a skeleton vertex the direction indexes its children (or block
        symbols); for a segment point the only direction is 0; for a block
        prefix it is the next symbol.
        """
        if x.word is not None:
            return 0.0
        v = x.vertex
        if x.offset != INF:
            return self.fringe_mass(x)
        if x.prefix:
            if x.edge_height != INF:
                return self.fringe_mass(x)
            return self.block_mass[v] * self.block[v].cylinder(x.prefix + (direction,))  # type: ignore[union-attr]
        if self.block[v] is not None:
            return self.block_mass[v] * self.block[v].cylinder((direction,))  # type: ignore[union-attr]
        c = self.children[v][direction]
        return self.seg_mass[c] + self.fringe[c]

    def height(self, x: TreePoint) -> float:
        """Distance from the root."""
        if x.word is not None:
            return 1.0
        v = x.vertex
        if x.offset != INF:
            return self.vertex_height[self.parent[v]] + x.offset
        if x.prefix:
            if x.edge_height != INF:
                return x.edge_height
            return 1.0 - self.fringe_mass(x)
        return self.vertex_height[v]

    def distance(self, x: TreePoint, y: TreePoint) -> float:
        """Path distance from heights of x, y and their mrca."""
        m = self.mrca(x, y)
        return self.height(x) + self.height(y) - 2.0 * self.height(m)

    def mass_distance(self, x: TreePoint, y: TreePoint) -> float:
        """Distance through fringe masses; equals :meth:`distance` on the support."""
        m = self.mrca(x, y)
        return 2.0 * self.fringe_mass(m) - self.fringe_mass(x) - self.fringe_mass(y)

    def is_atom(self, x: TreePoint) -> bool:
        return x.offset == INF and not x.in_block() and self.atom[x.vertex] > 0

    def direction(self, x: TreePoint, y: TreePoint) -> int:
        """Index of the subtree of x containing the strict descendant y."""
        if x.offset != INF:
            return 0
        if x.prefix:
            return self._block_symbols(y, len(x.prefix))
        if y.vertex == x.vertex:
            return self._block_symbols(y, 0)
        v = y.vertex
        while self.parent[v] != x.vertex:
            v = self.parent[v]
        return self.child_index[v]

    # decorations --------------------------------------------------------

    def lambda_at(self, x: TreePoint, decorations: Decorations | None = None) -> float:
        dec = decorations or self.decorations
        if x.offset == INF:
            raise DecorationError(f"branch weight requested off the segment interiors at {x!r}")
        pieces = dec.lam.get(x.vertex)
        if not pieces:
            if dec.lam_default is None:
                raise DecorationError(f"branch weight undefined on the segment into {self.names[x.vertex]!r}")
            return dec.lam_default
        value = pieces[0][1]
        for start, val in pieces:
            if start <= x.offset:
                value = val
        return value

    def beta_at(self, v: int, subtree: int, decorations: Decorations | None = None) -> float:
        dec = decorations or self.decorations
        thresholds = dec.beta.get(v)
        count = self.subtree_count(v)
        if thresholds is None:
            raise DecorationError(f"no threshold list for the atom at {self.names[v]!r}")
        if len(thresholds) != count:
            raise DecorationError(
                f"threshold list at {self.names[v]!r} has {len(thresholds)} entries for {count} subtrees")
        return thresholds[subtree]

    # sampling -------------------------------------------------------------

    def sample_point(self, rng) -> TreePoint:
        """Draw one point from the tree's measure using a numpy Generator."""
        u, u2 = rng.random(2)
        word_seed = int(rng.integers(0, 2**63))
        target = u * self.total_mass
        acc = 0.0
        kind, v, mass = self.components[-1]
        for comp in self.components:
            acc += comp[2]
            if target < acc:
                kind, v, mass = comp
                break
        if kind == "atom":
            return TreePoint(v)
        if kind == "block":
            return TreePoint(v, word=LazyWord(self.block[v], word_seed))  # type: ignore[arg-type]
        want = u2 * mass
        prof = self.profile[v]
        for (t0, m0), (t1, m1) in zip(prof, prof[1:]):
            if m1 > m0 and want <= m1:
                t = t0 + (want - m0) * (t1 - t0) / (m1 - m0)
                return TreePoint(v, offset=min(max(t, t0), t1))
        t_end = prof[-1][0]
        return TreePoint(v, offset=t_end)

    def sample_points(self, n: int, rng) -> list[TreePoint]:
        return [self.sample_point(rng) for _ in range(n)]

    # special points ---------------------------------------------------------

    def vertex_in_support(self, v: int) -> bool:
        if self.atom[v] > 0 or self.block_mass[v] > 0:
            return True
        if v != 0 and self.density_left(v, self.length[v]) > 0:
            return True
        return any(self.density_right(c, 0.0) > 0 for c in self.children[v])

    def special_points(self) -> list[TreePoint]:
        """Skeleton vertices and profile breakpoints touching the support."""
        out: list[TreePoint] = []
        for v in range(len(self.names)):
            out.append(TreePoint(v))
            if v == 0:
                continue
            prof = self.profile[v]
            for k in range(1, len(prof) - 1):
                t = prof[k][0]
                if self.density_left(v, t) > 0 or self.density_right(v, t) > 0:
                    out.append(TreePoint(v, offset=t))
        return out

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"IpTree{label}({len(self.names)} vertices, {len(self.components)} mass components)"


# module-level operations ---------------------------------------------------

def fringe_mass(tree: IpTree, x: TreePoint) -> float:
    return tree.fringe_mass(x)


def mrca(tree: IpTree, x: TreePoint, y: TreePoint) -> TreePoint:
    return tree.mrca(x, y)


def is_ancestor(tree: IpTree, x: TreePoint, y: TreePoint) -> bool:
    return tree.is_ancestor(x, y)


def sample_point(tree: IpTree, rng) -> TreePoint:
    return tree.sample_point(rng)


def validate_ip(tree: IpTree, tol: float = MASS_TOL) -> list[str]:
    """Check normalization, spanning and spacing; an empty list means valid."""
    report: list[str] = []
    if abs(tree.total_mass - 1.0) > tol:
        report.append(f"mass: total mass {tree.total_mass:.12g} differs from 1")
    for v in range(len(tree.names)):
        if tree.children[v] or tree.block_mass[v] > 0 or tree.atom[v] > 0:
            continue
        if v == 0 or tree.density_left(v, tree.length[v]) <= 0:
            report.append(f"spanning: leaf {tree.names[v]!r} is not in the support of the measure")
    for v in range(len(tree.names)):
        branch = tree.subtree_count(v) >= 2
        leaf = not tree.children[v]
        if branch or leaf or tree.vertex_in_support(v) or v == 0:
            d = tree.vertex_height[v]
            f = tree.fringe[v]
            if abs(d + f - 1.0) > tol:
                report.append(
                    f"spacing: at vertex {tree.names[v]!r} distance {d:.12g} + fringe mass {f:.12g} = {d + f:.12g}")
        if v == 0:
            continue
        prof = tree.profile[v]
        for k in range(1, len(prof) - 1):
            t = prof[k][0]
            if tree.density_left(v, t) > 0 or tree.density_right(v, t) > 0:
                p = TreePoint(v, offset=t)
                d = tree.height(p)
                f = tree.fringe_mass(p)
                if abs(d + f - 1.0) > tol:
                    report.append(
                        f"spacing: on segment into {tree.names[v]!r} at offset {t:.12g}, "
                        f"distance {d:.12g} + fringe mass {f:.12g} = {d + f:.12g}")
    report.extend(check_decorations(tree, tree.decorations))
    return report


def check_decorations(tree: IpTree, dec: Decorations) -> list[str]:
    out: list[str] = []
    for v, pieces in dec.lam.items():
        if any(not 0.0 <= val <= 1.0 for _, val in pieces):
            out.append(f"decorations: branch weight outside [0,1] on {tree.names[v]!r}")
    if dec.lam_default is not None and not 0.0 <= dec.lam_default <= 1.0:
        out.append("decorations: default branch weight outside [0,1]")
    for v, th in dec.beta.items():
        if tree.atom[v] <= 0:
            out.append(f"decorations: thresholds given at {tree.names[v]!r}, which carries no atom")
        if len(th) != tree.subtree_count(v):
            out.append(f"decorations: {len(th)} thresholds at {tree.names[v]!r} for {tree.subtree_count(v)} subtrees")
        if any(not 0.0 <= b <= 1.0 for b in th) or any(a > b for a, b in zip(th, th[1:])):
            out.append(f"decorations: thresholds at {tree.names[v]!r} must be non-decreasing in [0,1]")
    for v in range(len(tree.names)):
        if tree.atom[v] > 0 and tree.subtree_count(v) > 0 and v not in dec.beta:
            out.append(f"decorations: atom at {tree.names[v]!r} with subtrees has no thresholds")
        if v and tree.seg_mass[v] > 0 and v not in dec.lam and dec.lam_default is None:
            out.append(f"decorations: no branch weight on the segment into {tree.names[v]!r}")
    return out


# the epsilon partition -------------------------------------------------------

@dataclass
class Cell:
    root: TreePoint
    level: int
    mass: float = 0.0          # mass of the cell with B-atoms removed
    parent: int | None = None
    atoms: list[int] = field(default_factory=list)  # indices into B


@dataclass
class EpsilonPartition:
    tree: IpTree
    eps: float
    levels: list[float]
    cells: list[Cell]
    atoms: list[tuple[int, float]]      # B-singletons: (vertex, mass)
    remainder: float                    # mass of S
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def half(self) -> float:
        return self.eps / 2.0

    def band(self, h: float) -> int:
        return min(len(self.levels) - 1, int(math.floor(h / self.half + LEVEL_SLACK)))

    def cell_root(self, y: TreePoint) -> TreePoint:
        """Root of the cell T(x) containing y."""
        return _ancestor_at_level(self.tree, y, self.band(self.tree.height(y)), self.half)

    def cell_index(self, y: TreePoint) -> int:
        try:
            return self._index[self.cell_root(y)]
        except KeyError:
            raise KeyError(f"point {y!r} falls outside the enumerated cells (remainder S)") from None

    def atom_index(self, y: TreePoint) -> int | None:
        if y.offset != INF or y.in_block():
            return None
        for j, (v, _) in enumerate(self.atoms):
            if v == y.vertex:
                return j
        return None

    def locate(self, y: TreePoint) -> tuple[str, int]:
        """("B", j) for a B-atom, ("A", i) otherwise."""
        j = self.atom_index(y)
        if j is not None:
            return ("B", j)
        return ("A", self.cell_index(y))

    def lookup(self, x: TreePoint) -> tuple[list[int], list[int], int]:
        """(I_x, J_x, k_x): cells and atoms inside F(x), and the cell holding x."""
        t = self.tree
        I = [i for i, c in enumerate(self.cells) if t.is_ancestor(x, c.root)]
        J = [j for j, (v, _) in enumerate(self.atoms) if t.is_ancestor(x, TreePoint(v))]
        return I, J, self.cell_index(x)

    def check(self, queries: Iterable[TreePoint] = ()) -> list[str]:
        """Machine check of the four partition properties."""
        t = self.tree
        out: list[str] = []
        total = sum(c.mass for c in self.cells) + sum(m for _, m in self.atoms) + self.remainder
        if abs(total - 1.0) > 1e-8:
            out.append(f"partition: masses sum to {total:.12g}")
        if self.remainder > self.eps + 1e-12:
            out.append(f"remainder mass {self.remainder} exceeds eps")
        for i, c in enumerate(self.cells):
            if c.mass < -1e-9:
                out.append(f"cell {i} has negative mass {c.mass}")
            if c.mass > self.eps + 1e-9:
                out.append(f"cell {i} has mass {c.mass} > eps")
            top = min(1.0, self.levels[c.level] + self.half) if c.level + 1 < len(self.levels) else 1.0
            diam_bound = 2.0 * (top - self.levels[c.level])
            if diam_bound > self.eps + 1e-9:
                out.append(f"cell {i} may have diameter {diam_bound} > eps")
            if abs(t.height(c.root) - self.levels[c.level]) > 1e-9:
                out.append(f"cell {i} root is not at its level height")
            if i and c.parent is None:
                out.append(f"cell {i} is disconnected from the root cell")
        tail = sum(t.atom) - sum(m for _, m in self.atoms)
        if tail > self.half + 1e-12:
            out.append(f"atoms outside B carry {tail} > eps/2")
        for x in queries:
            I, J, k = self.lookup(x)
            for i, c in enumerate(self.cells):
                if i == k or i in I:
                    continue
                if t.is_ancestor(c.root, x) and self.band(t.height(x)) <= c.level:
                    out.append(f"cell {i} meets F({x!r}) partially")
            inside = sum(self.cells[i].mass for i in I) + sum(self.atoms[j][1] for j in J)
            gap = abs(t.fringe_mass(x) - inside)
            if gap > self.cells[k].mass + self.remainder + 1e-9:
                out.append(f"F({x!r}) differs from its cell cover by {gap}")
        return out


def _ancestor_at_level(tree: IpTree, y: TreePoint, level: int, half: float) -> TreePoint:
    """The ancestor of y at height ``level * half`` (point on a segment, vertex or block edge)."""
    c = level * half

    def same(h: float) -> bool:
        return abs(h / half - level) <= LEVEL_SLACK

    def above(h: float) -> bool:  # the level lies strictly below height h's band start
        return level > h / half + LEVEL_SLACK

    v = y.vertex
    if y.offset == INF and y.in_block() and above(tree.vertex_height[v]):
        measure = tree.block[v]
        k = 1
        while True:
            if y.word is not None:
                w = y.word.prefix(k)
            else:
                w = y.prefix[:k]
            hk = 1.0 - tree.block_mass[v] * measure.cylinder(w)  # type: ignore[union-attr]
            if same(hk):
                return TreePoint(v, prefix=w)
            if not above(hk):
                return TreePoint(v, prefix=w, edge_height=c)
            if y.word is None and k >= len(y.prefix):
                raise ValueError("level lies below the point")
            k += 1
            if k > DEFAULT_PREFIX_BUDGET * 4:
                raise SeparationBudgetError("block level search exceeded the prefix budget")
    if y.offset != INF:
        h0 = tree.vertex_height[tree.parent[v]]
        if above(h0):
            if same(tree.vertex_height[v]):
                return TreePoint(v)
            return TreePoint(v, offset=c - h0)
        u = tree.parent[v]
    else:
        u = v
    while True:
        if same(tree.vertex_height[u]) or u == 0:
            return TreePoint(u)
        h0 = tree.vertex_height[tree.parent[u]]
        if above(h0):
            return TreePoint(u, offset=c - h0)
        u = tree.parent[u]


def epsilon_partition(tree: IpTree, eps: float, max_cells: int = 1_000_000) -> EpsilonPartition:
    """A/B/S decomposition with height bands of width eps/2."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    half = eps / 2.0
    L = math.ceil(1.0 / half - LEVEL_SLACK) - 1
    levels = [l * half for l in range(L + 1)]

    def band(h: float) -> int:
        return min(L, int(math.floor(h / half + LEVEL_SLACK)))

    def same(h: float, l: int) -> bool:
        return abs(h / half - l) <= LEVEL_SLACK

    # B: heaviest atoms until the remaining atom mass is at most eps/2
    order = sorted((v for v in range(len(tree.names)) if tree.atom[v] > 0),
                   key=lambda v: (-tree.atom[v], v))
    remaining = sum(tree.atom[v] for v in order)
    atoms: list[tuple[int, float]] = []
    for v in order:
        if remaining <= half:
            break
        atoms.append((v, tree.atom[v]))
        remaining -= tree.atom[v]

    roots: list[tuple[TreePoint, int]] = [(TreePoint(0), 0)]
    for v in range(1, len(tree.names)):
        h0, h1 = tree.vertex_height[tree.parent[v]], tree.vertex_height[v]
        for l in range(band(h0) + 1, band(h1) + 1):
            if same(h1, l):
                roots.append((TreePoint(v), l))
            else:
                roots.append((TreePoint(v, offset=levels[l] - h0), l))
    for v in range(len(tree.names)):
        measure = tree.block[v]
        if measure is None:
            continue
        stack: list[tuple[tuple[int, ...], float]] = [((), tree.vertex_height[v])]
        while stack:
            w, h_top = stack.pop()
            if band(h_top) >= L:
                continue
            for z in range(measure.ell):
                wz = w + (z,)
                h_bot = 1.0 - tree.block_mass[v] * measure.cylinder(wz)
                for l in range(band(h_top) + 1, band(h_bot) + 1):
                    if same(h_bot, l):
                        roots.append((TreePoint(v, prefix=wz), l))
                    else:
                        roots.append((TreePoint(v, prefix=wz, edge_height=levels[l]), l))
                if len(roots) > max_cells:
                    raise ValueError("epsilon partition needs too many cells; increase eps")
                stack.append((wz, h_bot))

    cells = [Cell(root=r, level=l) for r, l in roots]
    index = {c.root: i for i, c in enumerate(cells)}
    part = EpsilonPartition(tree, eps, levels, cells, atoms, 0.0, index)
    child_mass = [0.0] * len(cells)
    for i, c in enumerate(cells):
        if c.level == 0:
            continue
        up = _ancestor_at_level(tree, c.root, c.level - 1, half)
        p = index[up]
        c.parent = p
        child_mass[p] += tree.fringe_mass(c.root)
    for j, (v, m) in enumerate(atoms):
        k = part.cell_index(TreePoint(v))
        cells[k].atoms.append(j)
    for i, c in enumerate(cells):
        c.mass = tree.fringe_mass(c.root) - child_mass[i] - sum(atoms[j][1] for j in c.atoms)
    return part


# configuration files -------------------------------------------------------

def _parse_pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.split(","):
        if ":" not in item:
            raise IpConfigError(f"expected position:value pairs, got {item!r}")
        a, b = item.split(":", 1)
        out.append((parse_number(a), parse_number(b)))
    return out


def _parse_list(text: str) -> tuple[float, ...]:
    return tuple(parse_number(x) for x in text.split(",") if x.strip())


def parse_ip_config(text: str, name: str = "") -> IpTree:
    """Parse the line-oriented IP-tree format (see the README for the schema)."""
    names: list[str] = []
    parents: list[int] = []
    lengths: list[float] = []
    atoms: list[float] = []
    profiles: list = []
    lam: dict[int, tuple] = {}
    beta: dict[int, tuple] = {}
    blocks: dict[int, tuple[float, BoundaryMeasure]] = {}
    lam_default = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head in ("root", "vertex"):
                if head == "root":
                    if names:
                        raise IpConfigError("the root must be declared first and once")
                    vname = "root"
                    opts = _options(rest)
                else:
                    if not names:
                        raise IpConfigError("declare the root before other vertices")
                    if not rest:
                        raise IpConfigError("vertex needs a name")
                    vname, opts = rest[0], _options(rest[1:])
                    if vname in names:
                        raise IpConfigError(f"duplicate vertex {vname!r}")
                v = len(names)
                names.append(vname)
                if head == "root":
                    parents.append(-1)
                    lengths.append(0.0)
                    profiles.append([])
                else:
                    if "parent" not in opts or "length" not in opts:
                        raise IpConfigError("vertex needs parent= and length=")
                    if opts["parent"] not in names[:-1]:
                        raise IpConfigError(f"unknown parent {opts['parent']!r}")
                    parents.append(names.index(opts.pop("parent")))
                    L = parse_number(opts.pop("length"))
                    lengths.append(L)
                    prof = opts.pop("profile", None)
                    if prof is None:
                        profiles.append(None)
                    elif prof == "lebesgue":
                        profiles.append([(0.0, 0.0), (L, L)])
                    else:
                        profiles.append(_parse_pairs(prof))
                    if "lambda" in opts:
                        spec = opts.pop("lambda")
                        lam[v] = tuple(_parse_pairs(spec)) if ":" in spec else ((0.0, parse_number(spec)),)
                atoms.append(parse_number(opts.pop("atom", "0")))
                if "beta" in opts:
                    beta[v] = _parse_list(opts.pop("beta"))
                if opts:
                    raise IpConfigError(f"unknown keys {sorted(opts)}")
            elif head == "block":
                if not rest or rest[0] not in names:
                    raise IpConfigError("block needs an existing vertex name")
                v = names.index(rest[0])
                opts = _options(rest[1:])
                mass = parse_number(opts.pop("mass", "1"))
                ell = int(opts.pop("ell", "2"))
                if "transition" in opts:
                    rows = tuple(_parse_list(r) for r in opts.pop("transition").split(";"))
                    init = _parse_list(opts.pop("initial"))
                    measure = BoundaryMeasure(ell, initial=init, transition=rows)
                else:
                    probs = opts.pop("probs", None)
                    measure = BoundaryMeasure(ell, probs=_parse_list(probs) if probs else None)
                if opts:
                    raise IpConfigError(f"unknown keys {sorted(opts)}")
                blocks[v] = (mass, measure)
            elif head == "lambda":
                opts = _options(rest)
                lam_default = parse_number(opts.pop("default"))
                if opts:
                    raise IpConfigError(f"unknown keys {sorted(opts)}")
            elif head == "beta":
                if len(rest) != 2 or rest[0] not in names:
                    raise IpConfigError("beta needs a vertex name and a threshold list")
                beta[names.index(rest[0])] = _parse_list(rest[1])
            elif head == "name":
                name = " ".join(rest)
            else:
                raise IpConfigError(f"unknown directive {head!r}")
        except (IpConfigError, IpStructureError, KeyError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            raise IpConfigError(f"line {lineno}: {msg}") from None
    if not names:
        raise IpConfigError("configuration declares no root")
    block_list = [blocks.get(v) for v in range(len(names))]
    dec = Decorations(lam=lam, lam_default=lam_default, beta=beta)
    return IpTree(names, parents, lengths, atoms, [p or [] for p in profiles], block_list, dec, name)


def _options(tokens: Sequence[str]) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise IpConfigError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


PRESETS = {
    "interval": """\
name interval
# Lebesgue measure on [0, 1]; leaves go left with probability 0.3 below 1/2, 0.7 above
root
vertex top parent=root length=1 profile=lebesgue lambda=0:0.3,1/2:0.7
""",
    "ell-ary": """\
name ell-ary
# binary boundary tree with the uniform product measure
root
block root mass=1 ell=2 probs=1/2,1/2
""",
    "atom-line": """\
name atom-line
# Lebesgue on [0, 0.4], an atom of mass 0.2 at 0.4, a gap, then Lebesgue on [0.6, 1]
root
vertex a parent=root length=0.4 profile=lebesgue atom=0.2 beta=1/2 lambda=1/2
vertex top parent=a length=0.6 profile=0:0,0.2:0,0.6:0.4 lambda=1/2
""",
}


def load_ip(source: str) -> IpTree:
    """A preset name or a path to a configuration file."""
    if source in PRESETS:
        return parse_ip_config(PRESETS[source], source)
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IpConfigError(f"cannot read {source!r}: {exc.strerror}") from None
    return parse_ip_config(text)

"""Pure-Python kernels. Mirrors ``_ckernels.pyx`` operation for operation."""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
_C1 = 0x9E3779B97F4A7C15
_C2 = 0xD1B54A32D192ED03
_INV53 = 1.0 / 9007199254740992.0


def _mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def counter_uniform(seed: int, step: int, draw: int) -> float:
    """Uniform on [0, 1) addressed by (seed, step, draw)."""
    h = _mix64((seed & MASK) + _C1 * (step + 1))
    h = _mix64(h + _C2 * (draw + 1))
    return (h >> 11) * _INV53


def marchal_grow(n: int, alpha: float, seed: int, export_at) -> list[np.ndarray]:
    """Grow a Marchal chain to ``n`` leaves, exporting preorder child counts.

    Returns one int64 array per requested size in ``export_at`` (sorted).
    """
    export = sorted(set(int(k) for k in export_at))
    cap = 2 * n + 2
    parent = [-1] * cap
    first = [-1] * cap
    nxt = [-1] * cap
    prv = [-1] * cap
    nchild = [0] * cap
    # T_1: root 0 with a single leaf 1
    first[0] = 1
    nchild[0] = 1
    parent[1] = 0
    nv = 2
    out: list[np.ndarray] = []
    ei = 0
    p_edge = (alpha - 1.0) / alpha
    seed &= MASK
    while ei < len(export) and export[ei] == 1:
        out.append(_export(first, nxt, nchild, nv))
        ei += 1
    for leaves in range(1, n):
        step = leaves
        attempt = 0
        while True:
            base = 4 * attempt
            attempt += 1
            e = 1 + int(counter_uniform(seed, step, base) * (nv - 1))
            if e >= nv:
                e = nv - 1
            u_kind = counter_uniform(seed, step, base + 1)
            u_acc = counter_uniform(seed, step, base + 2)
            u_pos = counter_uniform(seed, step, base + 3)
            if u_kind < p_edge:
                p = parent[e]
                w = nv
                leaf = nv + 1
                nv += 2
                # w takes e's place among p's children
                parent[w] = p
                prv[w] = prv[e]
                nxt[w] = nxt[e]
                if prv[e] >= 0:
                    nxt[prv[e]] = w
                else:
                    first[p] = w
                if nxt[e] >= 0:
                    prv[nxt[e]] = w
                parent[e] = w
                parent[leaf] = w
                nchild[w] = 2
                if u_pos < 0.5:
                    first[w] = leaf
                    nxt[leaf], prv[leaf] = e, -1
                    nxt[e], prv[e] = -1, leaf
                else:
                    first[w] = e
                    nxt[e], prv[e] = leaf, -1
                    nxt[leaf], prv[leaf] = -1, e
                break
            p = parent[e]
            if p == 0:
                continue
            c = nchild[p]
            if u_acc >= (c - alpha) / c:
                continue
            gap = int(u_pos * (c + 1))
            if gap > c:
                gap = c
            leaf = nv
            nv += 1
            parent[leaf] = p
            if gap == 0:
                old = first[p]
                first[p] = leaf
                prv[leaf], nxt[leaf] = -1, old
                prv[old] = leaf
            else:
                left = first[p]
                for _ in range(gap - 1):
                    left = nxt[left]
                right = nxt[left]
                nxt[left] = leaf
                prv[leaf] = left
                nxt[leaf] = right
                if right >= 0:
                    prv[right] = leaf
            nchild[p] = c + 1
            break
        while ei < len(export) and export[ei] == leaves + 1:
            out.append(_export(first, nxt, nchild, nv))
            ei += 1
    return out


def _export(first, nxt, nchild, nv) -> np.ndarray:
    deg = np.empty(nv, dtype=np.int64)
    stack = [0]
    k = 0
    while stack:
        v = stack.pop()
        deg[k] = nchild[v]
        k += 1
        kids = []
        c = first[v]
        while c >= 0:
            kids.append(c)
            c = nxt[c]
        stack.extend(reversed(kids))
    return deg


def mean_leaf_depth(degrees) -> float:
    """Mean root-to-leaf edge count for a preorder child-count sequence."""
    remaining: list[int] = []
    total = 0
    leaves = 0
    for d in degrees:
        d = int(d)
        depth = len(remaining)
        if d == 0:
            total += depth
            leaves += 1
            while remaining:
                remaining[-1] -= 1
                if remaining[-1] == 0:
                    remaining.pop()
                else:
                    break
        else:
            remaining.append(d)
    return total / leaves


def _first(mask: np.ndarray):
    hits = np.argwhere(mask)
    return None if len(hits) == 0 else tuple(int(v) for v in hits[0])


def _quads(n: int) -> np.ndarray:
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    quads = [a + b for x, a in enumerate(pairs) for b in pairs[x:]]
    return np.array(quads, dtype=np.int64).reshape(-1, 4)


def _pad(code: str, idx) -> tuple:
    idx = tuple(idx) + (-1,) * (4 - len(idx))
    return (code,) + idx


def dendritic_violations(pair_class, order, p_leaf) -> list[tuple]:
    """First violation of each axiom check as (code, a, b, c, d), 0-based.

    Planarity checks only run when the order checks pass.
    """
    pc = np.asarray(pair_class, dtype=np.int64)
    od = np.asarray(order, dtype=bool)
    pl = np.asarray(p_leaf, dtype=np.int8)
    n, K = pc.shape[0], od.shape[0]
    diag = np.diagonal(pc)
    eye_n = np.eye(n, dtype=bool)
    out = []

    hit = _first(pc != pc.T)
    if hit is not None:
        out.append(_pad("C1sym", hit))
    else:
        seen = set()
        for i, c in enumerate(diag.tolist()):
            if c in seen:
                out.append(_pad("C1leaf", (i,)))
                break
            seen.add(c)
        else:
            is_leaf = np.zeros(K, dtype=bool)
            is_leaf[diag] = True
            hit = _first(is_leaf[pc] & ~eye_n)
            if hit is not None:
                out.append(_pad("C1pair", hit))

    hit = _first(~od[pc, diag[:, None]])
    if hit is not None:
        out.append(_pad("C2", hit))

    hit = _first(~np.diagonal(od))
    if hit is not None:
        out.append(_pad("C3refl", hit))
    else:
        hit = _first(np.triu(od & od.T, 1))
        if hit is not None:
            out.append(_pad("C3anti", hit))
        else:
            hit = _first(od[:, :, None] & od[None, :, :] & ~od[:, None, :])
            if hit is not None:
                out.append(_pad("C3trans", hit))

    if n:
        q = _quads(n)
        i, j, k, l = q.T
        six = np.stack([pc[i, j], pc[k, l], pc[i, l], pc[i, k], pc[j, l], pc[j, k]], axis=1)
        has_min = od[six[:, :, None], six[:, None, :]].all(axis=2).any(axis=1)
        if not has_min.all():
            out.append(_pad("C4", q[int(np.argmin(has_min))].tolist()))
    if out:
        return out

    bad1 = pl != -pl.T
    bad2 = (pl == 0) != eye_n
    hit = _first(bad1 | bad2)
    if hit is not None:
        return [_pad("P1leaf" if bad1[hit] else "P2leaf", hit)]
    rep = np.empty(K, dtype=np.int64)
    rows = np.repeat(np.arange(n), n)
    rep[pc.ravel()[::-1]] = rows[::-1]
    comparable = od | od.T
    p = pl[np.ix_(rep, rep)].copy()
    p[comparable] = 0
    bad1 = p != -p.T
    bad2 = (p == 0) & ~comparable
    hit = _first(bad1 | bad2)
    if hit is not None:
        return [_pad("P1" if bad1[hit] else "P2", hit)]
    pos = p == 1
    hit = _first(pos[:, :, None] & pos[None, :, :] & ~pos[:, None, :])
    if hit is not None:
        out.append(_pad("P3", hit))
    hit = _first(pos[:, :, None] & od[None, :, :] & ~pos[:, None, :])
    if hit is not None:
        out.append(_pad("P4", hit))
    return out


def _subtree_sizes(deg: np.ndarray) -> np.ndarray:
    size = np.empty(len(deg), dtype=np.int64)
    for v in range(len(deg) - 1, -1, -1):
        c = v + 1
        for _ in range(deg[v]):
            c += size[c]
        size[v] = c - v
    return size


def dendritic_from_tree(degrees, leaf_label):
    """Canonical (pair_class, order, p) of a tree whose leaves carry labels 1..n.

    ``leaf_label[v]`` is the label of preorder vertex v, 0 when unlabelled.
    """
    deg = [int(d) for d in degrees]
    lab = [int(l) for l in leaf_label]
    V = len(deg)
    size = _subtree_sizes(deg).tolist()
    cum = [0]
    for d in deg:
        cum.append(cum[-1] + (d == 0))
    n = cum[-1]
    # leaves below a vertex are contiguous in planar order, so each sibling
    # pair of subtrees fills a rectangle of the matrix indexed by leaf rank
    by_rank = np.empty((n, n), dtype=np.int64)
    rank_label = np.empty(n, dtype=np.int64)
    for v in range(V):
        if deg[v] == 0:
            by_rank[cum[v], cum[v]] = v
            rank_label[lab[v] - 1] = cum[v]
            continue
        hi_v = cum[v + size[v]]
        c = v + 1
        for _ in range(deg[v] - 1):
            lo_a, hi_a = cum[c], cum[c + size[c]]
            by_rank[lo_a:hi_a, hi_a:hi_v] = v
            by_rank[hi_a:hi_v, lo_a:hi_a] = v
            c += size[c]
    raw = by_rank[rank_label[:, None], rank_label[None, :]]
    flat = raw.ravel()
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    by_first = np.argsort(first, kind="stable")
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[by_first] = np.arange(len(uniq))
    old = uniq[by_first]
    pc = rank[inverse].reshape(n, n)
    end = old + np.asarray(size, dtype=np.int64)[old]
    order = (old[:, None] <= old[None, :]) & (old[None, :] < end[:, None])
    p = np.sign(rank_label[None, :] - rank_label[:, None]).astype(np.int8)
    return pc, order, p


def dendritic_to_tree(pair_class, order, p_leaf):
    """Preorder degrees and {vertex: label} of the planted tree of a valid system.

    Returns None when the order has no unique minimal class.
    """
    pc = np.asarray(pair_class, dtype=np.int64)
    od = np.asarray(order, dtype=bool)
    pl = np.asarray(p_leaf, dtype=np.int8)
    n, K = pc.shape[0], od.shape[0]
    strict = od & ~np.eye(K, dtype=bool)
    depth = strict.sum(axis=0)
    roots = np.flatnonzero(depth == 0)
    if len(roots) != 1:
        return None
    parent = np.argmax(strict * (depth[:, None] + 1), axis=0)
    rep = np.empty(K, dtype=np.int64)
    rows = np.repeat(np.arange(n), n)
    rep[pc.ravel()[::-1]] = rows[::-1]
    label = np.zeros(K, dtype=np.int64)
    label[np.diagonal(pc)] = np.arange(1, n + 1)
    kids: list[list[int]] = [[] for _ in range(K)]
    for x in range(K):
        if depth[x] > 0:
            kids[int(parent[x])].append(x)
    for x in range(K):
        ks = kids[x]
        if len(ks) > 1:
            r = rep[ks]
            ranks = (pl[np.ix_(r, r)] == 1).sum(axis=0)  # siblings to the left
            kids[x] = [ks[i] for i in np.argsort(ranks, kind="stable")]
    degrees = [1]
    labels = {}
    stack = [int(roots[0])]
    while stack:
        x = stack.pop()
        if label[x]:
            labels[len(degrees)] = int(label[x])
        degrees.append(len(kids[x]))
        stack.extend(reversed(kids[x]))
    return degrees, labels

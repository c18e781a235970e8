# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Must agree draw for draw with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t _C1 = 0x9E3779B97F4A7C15ULL
cdef uint64_t _C2 = 0xD1B54A32D192ED03ULL
cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t seed, uint64_t step, uint64_t draw) nogil:
    cdef uint64_t h = _mix64(seed + _C1 * (step + 1))
    h = _mix64(h + _C2 * (draw + 1))
    return <double>(h >> 11) * _INV53


def counter_uniform(seed, long long step, long long draw):
    """Uniform on [0, 1) addressed by (seed, step, draw)."""
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return _uniform(s, <uint64_t>step, <uint64_t>draw)


cdef cnp.ndarray _export(int64_t[:] first, int64_t[:] nxt, int64_t[:] nchild, int64_t nv):
    cdef cnp.ndarray[int64_t, ndim=1] deg = np.empty(nv, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] stack = np.empty(nv + 1, dtype=np.int64)
    cdef int64_t top = 0, k = 0, v, c, start
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        v = stack[top]
        deg[k] = nchild[v]
        k += 1
        # push children in reverse planar order
        start = top
        c = first[v]
        while c >= 0:
            stack[top] = c
            top += 1
            c = nxt[c]
        _reverse(stack, start, top)
    return deg


cdef inline void _reverse(int64_t[:] a, int64_t lo, int64_t hi):
    cdef int64_t t
    hi -= 1
    while lo < hi:
        t = a[lo]
        a[lo] = a[hi]
        a[hi] = t
        lo += 1
        hi -= 1


def marchal_grow(long long n, double alpha, seed, export_at):
    """Grow a Marchal chain to ``n`` leaves, exporting preorder child counts."""
    export = sorted(set(int(k) for k in export_at))
    cdef int64_t cap = 2 * n + 2
    cdef int64_t[:] parent = np.full(cap, -1, dtype=np.int64)
    cdef int64_t[:] first = np.full(cap, -1, dtype=np.int64)
    cdef int64_t[:] nxt = np.full(cap, -1, dtype=np.int64)
    cdef int64_t[:] prv = np.full(cap, -1, dtype=np.int64)
    cdef int64_t[:] nchild = np.zeros(cap, dtype=np.int64)
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef double p_edge = (alpha - 1.0) / alpha
    cdef int64_t nv = 2, leaves, e, p, w, leaf, c, gap, left, right, old, i
    cdef uint64_t step, base, attempt
    cdef double u_kind, u_acc, u_pos
    first[0] = 1
    nchild[0] = 1
    parent[1] = 0
    out = []
    cdef Py_ssize_t ei = 0
    while ei < len(export) and export[ei] == 1:
        out.append(_export(first, nxt, nchild, nv))
        ei += 1
    for leaves in range(1, n):
        step = <uint64_t>leaves
        attempt = 0
        while True:
            base = 4 * attempt
            attempt += 1
            e = 1 + <int64_t>(_uniform(s, step, base) * (nv - 1))
            if e >= nv:
                e = nv - 1
            u_kind = _uniform(s, step, base + 1)
            u_acc = _uniform(s, step, base + 2)
            u_pos = _uniform(s, step, base + 3)
            if u_kind < p_edge:
                p = parent[e]
                w = nv
                leaf = nv + 1
                nv += 2
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
                    nxt[leaf] = e
                    prv[leaf] = -1
                    nxt[e] = -1
                    prv[e] = leaf
                else:
                    first[w] = e
                    nxt[e] = leaf
                    prv[e] = -1
                    nxt[leaf] = -1
                    prv[leaf] = e
                break
            p = parent[e]
            if p == 0:
                continue
            c = nchild[p]
            if u_acc >= (c - alpha) / c:
                continue
            gap = <int64_t>(u_pos * (c + 1))
            if gap > c:
                gap = c
            leaf = nv
            nv += 1
            parent[leaf] = p
            if gap == 0:
                old = first[p]
                first[p] = leaf
                prv[leaf] = -1
                nxt[leaf] = old
                prv[old] = leaf
            else:
                left = first[p]
                for i in range(gap - 1):
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


def mean_leaf_depth(degrees):
    """Mean root-to-leaf edge count for a preorder child-count sequence."""
    cdef int64_t[:] deg = np.ascontiguousarray(degrees, dtype=np.int64)
    cdef Py_ssize_t m = deg.shape[0], i
    cdef int64_t[:] remaining = np.empty(m + 1, dtype=np.int64)
    cdef Py_ssize_t top = 0
    cdef double total = 0
    cdef int64_t leaves = 0, d
    for i in range(m):
        d = deg[i]
        if d == 0:
            total += top
            leaves += 1
            while top > 0:
                remaining[top - 1] -= 1
                if remaining[top - 1] == 0:
                    top -= 1
                else:
                    break
        else:
            remaining[top] = d
            top += 1
    return total / leaves



def dendritic_violations(pair_class, order, p_leaf):
    """First violation of each axiom check as (code, a, b, c, d), 0-based.

    Planarity checks only run when the order checks pass.
    """
    cdef int64_t[:, :] pc = np.ascontiguousarray(pair_class, dtype=np.int64)
    cdef cnp.uint8_t[:, :] od = np.ascontiguousarray(order, dtype=np.uint8)
    cdef cnp.int8_t[:, :] pl = np.ascontiguousarray(p_leaf, dtype=np.int8)
    cdef Py_ssize_t n = pc.shape[0], K = od.shape[0]
    cdef Py_ssize_t i, j, k, l, a, b, x, y, z
    cdef int64_t six[6]
    cdef bint ok
    cdef object hit
    out = []
    cdef cnp.uint8_t[:] leafmark = np.zeros(K, dtype=np.uint8)

    hit = None
    for i in range(n):
        for j in range(n):
            if pc[i, j] != pc[j, i]:
                hit = ("C1sym", i, j, -1, -1)
                break
        if hit is not None:
            break
    if hit is None:
        for i in range(n):
            if leafmark[pc[i, i]]:
                hit = ("C1leaf", i, -1, -1, -1)
                break
            leafmark[pc[i, i]] = 1
    if hit is None:
        for i in range(n):
            for j in range(n):
                if i != j and leafmark[pc[i, j]]:
                    hit = ("C1pair", i, j, -1, -1)
                    break
            if hit is not None:
                break
    if hit is not None:
        out.append(hit)

    hit = None
    for i in range(n):
        for j in range(n):
            if not od[pc[i, j], pc[i, i]]:
                hit = ("C2", i, j, -1, -1)
                break
        if hit is not None:
            break
    if hit is not None:
        out.append(hit)

    hit = None
    for x in range(K):
        if not od[x, x]:
            hit = ("C3refl", x, -1, -1, -1)
            break
    if hit is None:
        for x in range(K):
            for y in range(x + 1, K):
                if od[x, y] and od[y, x]:
                    hit = ("C3anti", x, y, -1, -1)
                    break
            if hit is not None:
                break
    if hit is None:
        for x in range(K):
            for y in range(K):
                if od[x, y]:
                    for z in range(K):
                        if od[y, z] and not od[x, z]:
                            hit = ("C3trans", x, y, z, -1)
                            break
                if hit is not None:
                    break
            if hit is not None:
                break
    if hit is not None:
        out.append(hit)

    hit = None
    for i in range(n):
        for j in range(i, n):
            for k in range(i, n):
                for l in range(k, n):
                    if k == i and l < j:
                        continue
                    six[0] = pc[i, j]; six[1] = pc[k, l]; six[2] = pc[i, l]
                    six[3] = pc[i, k]; six[4] = pc[j, l]; six[5] = pc[j, k]
                    ok = False
                    for a in range(6):
                        ok = True
                        for b in range(6):
                            if not od[six[a], six[b]]:
                                ok = False
                                break
                        if ok:
                            break
                    if not ok:
                        hit = ("C4", i, j, k, l)
                        break
                if hit is not None:
                    break
            if hit is not None:
                break
        if hit is not None:
            break
    if hit is not None:
        out.append(hit)
    if out:
        return out

    for i in range(n):
        for j in range(n):
            if pl[i, j] != -pl[j, i]:
                return [("P1leaf", i, j, -1, -1)]
            if (pl[i, j] == 0) != (i == j):
                return [("P2leaf", i, j, -1, -1)]
    cdef int64_t[:] rep = np.empty(K, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        for j in range(n - 1, -1, -1):
            rep[pc[i, j]] = i
    cdef cnp.int8_t[:, :] p = np.zeros((K, K), dtype=np.int8)
    for x in range(K):
        for y in range(K):
            if not (od[x, y] or od[y, x]):
                p[x, y] = pl[rep[x], rep[y]]
    for x in range(K):
        for y in range(K):
            if p[x, y] != -p[y, x]:
                return [("P1", x, y, -1, -1)]
            if p[x, y] == 0 and not (od[x, y] or od[y, x]):
                return [("P2", x, y, -1, -1)]
    hit = None
    for x in range(K):
        for y in range(K):
            if p[x, y] == 1:
                for z in range(K):
                    if p[y, z] == 1 and p[x, z] != 1:
                        hit = ("P3", x, y, z, -1)
                        break
            if hit is not None:
                break
        if hit is not None:
            break
    if hit is not None:
        out.append(hit)
    hit = None
    for x in range(K):
        for y in range(K):
            if p[x, y] == 1:
                for z in range(K):
                    if od[y, z] and p[x, z] != 1:
                        hit = ("P4", x, y, z, -1)
                        break
            if hit is not None:
                break
        if hit is not None:
            break
    if hit is not None:
        out.append(hit)
    return out


def dendritic_from_tree(degrees, leaf_label):
    """Canonical (pair_class, order, p) of a tree whose leaves carry labels 1..n.

    ``leaf_label[v]`` is the label of preorder vertex v, 0 when unlabelled.
    """
    cdef int64_t[:] deg = np.ascontiguousarray(degrees, dtype=np.int64)
    cdef int64_t[:] lab = np.ascontiguousarray(leaf_label, dtype=np.int64)
    cdef Py_ssize_t V = deg.shape[0], v, c, k, a, r, s, i, j, x, y
    cdef int64_t[:] size = np.empty(V, dtype=np.int64)
    cdef int64_t[:] cum = np.zeros(V + 1, dtype=np.int64)
    for v in range(V):
        cum[v + 1] = cum[v] + (deg[v] == 0)
    cdef Py_ssize_t n = cum[V]
    for v in range(V - 1, -1, -1):
        c = v + 1
        for k in range(deg[v]):
            c += size[c]
        size[v] = c - v
    cdef int64_t[:, :] by_rank = np.empty((n, n), dtype=np.int64)
    cdef int64_t[:] rank_label = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t lo_a, hi_a, hi_v
    for v in range(V):
        if deg[v] == 0:
            r = cum[v]
            by_rank[r, r] = v
            rank_label[lab[v] - 1] = r
            continue
        hi_v = cum[v + size[v]]
        c = v + 1
        for a in range(deg[v] - 1):
            lo_a = cum[c]
            hi_a = cum[c + size[c]]
            for r in range(lo_a, hi_a):
                for s in range(hi_a, hi_v):
                    by_rank[r, s] = v
                    by_rank[s, r] = v
            c += size[c]
    cdef int64_t[:] new_of_vertex = np.full(V, -1, dtype=np.int64)
    cdef int64_t[:] old = np.empty(n * n, dtype=np.int64)
    pc_arr = np.empty((n, n), dtype=np.int64)
    p_arr = np.empty((n, n), dtype=np.int8)
    cdef int64_t[:, :] pc = pc_arr
    cdef cnp.int8_t[:, :] p = p_arr
    cdef Py_ssize_t K = 0
    for i in range(n):
        for j in range(n):
            v = by_rank[rank_label[i], rank_label[j]]
            if new_of_vertex[v] < 0:
                new_of_vertex[v] = K
                old[K] = v
                K += 1
            pc[i, j] = new_of_vertex[v]
            p[i, j] = (rank_label[j] > rank_label[i]) - (rank_label[j] < rank_label[i])
    order_arr = np.zeros((K, K), dtype=bool)
    cdef cnp.uint8_t[:, :] od = order_arr.view(np.uint8)
    for x in range(K):
        for y in range(K):
            if old[x] <= old[y] < old[x] + size[old[x]]:
                od[x, y] = 1
    return pc_arr, order_arr, p_arr


def dendritic_to_tree(pair_class, order, p_leaf):
    """Preorder degrees and {vertex: label} of the planted tree of a valid system.

    Returns None when the order has no unique minimal class.
    """
    cdef int64_t[:, :] pc = np.ascontiguousarray(pair_class, dtype=np.int64)
    cdef cnp.uint8_t[:, :] od = np.ascontiguousarray(order, dtype=np.uint8)
    cdef cnp.int8_t[:, :] pl = np.ascontiguousarray(p_leaf, dtype=np.int8)
    cdef Py_ssize_t n = pc.shape[0], K = od.shape[0], x, y, i, j, root = -1, nroots = 0
    cdef Py_ssize_t a, b, c, best
    cdef int64_t[:] depth = np.zeros(K, dtype=np.int64)
    cdef int64_t[:] rep = np.empty(K, dtype=np.int64)
    cdef int64_t[:] label = np.zeros(K, dtype=np.int64)
    for x in range(K):
        for y in range(K):
            if y != x and od[y, x]:
                depth[x] += 1
        if depth[x] == 0:
            root = x
            nroots += 1
    if nroots != 1:
        return None
    for i in range(n - 1, -1, -1):
        for j in range(n - 1, -1, -1):
            rep[pc[i, j]] = i
    for i in range(n):
        label[pc[i, i]] = i + 1
    kids = [[] for _ in range(K)]
    for x in range(K):
        if x == root:
            continue
        best = -1
        for y in range(K):
            if y != x and od[y, x] and (best < 0 or depth[y] > depth[best]):
                best = y
        kids[best].append(x)
    cdef list ks
    for x in range(K):
        ks = kids[x]
        c = len(ks)
        if c > 1:
            ranks = [0] * c
            for a in range(c):
                for b in range(c):
                    if pl[rep[ks[b]], rep[ks[a]]] == 1:
                        ranks[a] += 1
            kids[x] = [v for _, v in sorted(zip(ranks, ks))]
    degrees = [1]
    labels = {}
    stack = [root]
    while stack:
        x = stack.pop()
        if label[x]:
            labels[len(degrees)] = label[x]
        degrees.append(len(kids[x]))
        stack.extend(reversed(kids[x]))
    return degrees, labels

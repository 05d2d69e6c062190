"""
Compiled kernels for the contour tree of a grid field.

Vertex layout: cell (i, j) -> i * n_s + j, then the bottom cap (n_cells) and
the top cap (n_cells + 1).  Cells are joined by the Freudenthal triangulation
(axis neighbours plus the (+1, +1) diagonal) with theta wrapping; each cap is
coned onto its boundary row, so the complex is a triangulated sphere and the
contour tree is a tree.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_OFFSETS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1]], dtype=np.int64)


@njit(cache=True)
def neighbours(v, n_theta, n_s, out):
    """Write neighbours of vertex v into ``out``; return how many."""
    n_cells = n_theta * n_s
    cnt = 0
    if v >= n_cells:
        j = 0 if v == n_cells else n_s - 1
        for i in range(n_theta):
            out[cnt] = i * n_s + j
            cnt += 1
        return cnt
    i = v // n_s
    j = v % n_s
    bottom = False
    top = False
    for k in range(6):
        jj = j + _OFFSETS[k, 1]
        if jj < 0:
            if not bottom:
                out[cnt] = n_cells
                cnt += 1
                bottom = True
            continue
        if jj >= n_s:
            if not top:
                out[cnt] = n_cells + 1
                cnt += 1
                top = True
            continue
        ii = (i + _OFFSETS[k, 0]) % n_theta
        out[cnt] = ii * n_s + jj
        cnt += 1
    return cnt


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _sweep(order, rank, n_theta, n_s, descending):
    """Join tree (descending) or split tree (ascending) of the vertex order.

    Returns parent (towards the sweep end, -1 at the last vertex), the number
    of children and the sum of children ids (used to recover an only child).
    """
    nv = order.shape[0]
    uf = np.arange(nv)
    extreme = np.arange(nv)
    tparent = np.full(nv, -1, dtype=np.int64)
    nchild = np.zeros(nv, dtype=np.int64)
    childsum = np.zeros(nv, dtype=np.int64)
    buf = np.empty(max(n_theta, 8), dtype=np.int64)
    for step in range(nv):
        r = nv - 1 - step if descending else step
        v = order[r]
        cnt = neighbours(v, n_theta, n_s, buf)
        for k in range(cnt):
            u = buf[k]
            seen = rank[u] > r if descending else rank[u] < r
            if not seen:
                continue
            cu = _find(uf, u)
            cv = _find(uf, v)
            if cu == cv:
                continue
            leaf = extreme[cu]
            tparent[leaf] = v
            nchild[v] += 1
            childsum[v] += leaf
            uf[cu] = cv
            extreme[cv] = v
    return tparent, nchild, childsum


@njit(cache=True)
def contour_arcs(order, rank, n_theta, n_s):
    """Augmented contour tree arcs (every vertex kept) by merging join and split trees."""
    nv = order.shape[0]
    pj, upj, sumj = _sweep(order, rank, n_theta, n_s, True)
    ps, dns, sums = _sweep(order, rank, n_theta, n_s, False)
    arcs = np.empty((max(nv - 1, 0), 2), dtype=np.int64)
    removed = np.zeros(nv, dtype=np.bool_)
    stack = np.empty(nv * 2 + 4, dtype=np.int64)
    top = 0
    for v in range(nv):
        if upj[v] + dns[v] == 1:
            stack[top] = v
            top += 1
    n_arcs = 0
    while top > 0 and n_arcs < nv - 1:
        top -= 1
        v = stack[top]
        if removed[v] or upj[v] + dns[v] != 1:
            continue
        if upj[v] == 0:
            w = pj[v]
            upj[w] -= 1
            sumj[w] -= v
            x = sums[v]
            y = ps[v]
            ps[x] = y
            if y >= 0:
                sums[y] += x - v
        else:
            w = ps[v]
            dns[w] -= 1
            sums[w] -= v
            x = sumj[v]
            y = pj[v]
            pj[x] = y
            if y >= 0:
                sumj[y] += x - v
        removed[v] = True
        arcs[n_arcs, 0] = v
        arcs[n_arcs, 1] = w
        n_arcs += 1
        if not removed[w] and upj[w] + dns[w] == 1:
            if top >= stack.shape[0]:
                stack = np.concatenate((stack, np.empty(stack.shape[0], dtype=np.int64)))
            stack[top] = w
            top += 1
    return arcs[:n_arcs]


@njit(cache=True)
def compress_chains(nv, indptr, indices, is_node):
    """Walk maximal chains of non-node vertices between nodes.

    Returns chain endpoints (n_chains, 2) and, per vertex, the chain id it
    sits on (-1 for node vertices).
    """
    chain_of = np.full(nv, -1, dtype=np.int64)
    ends = np.empty((nv, 2), dtype=np.int64)
    n_chain = 0
    for n in range(nv):
        if not is_node[n]:
            continue
        for p in range(indptr[n], indptr[n + 1]):
            u = indices[p]
            if is_node[u]:
                if n < u:
                    ends[n_chain, 0] = n
                    ends[n_chain, 1] = u
                    n_chain += 1
                continue
            if chain_of[u] >= 0:
                continue
            prev = n
            cur = u
            while not is_node[cur]:
                chain_of[cur] = n_chain
                a = indices[indptr[cur]]
                nxt = a if a != prev else indices[indptr[cur] + 1]
                prev = cur
                cur = nxt
            ends[n_chain, 0] = n
            ends[n_chain, 1] = cur
            n_chain += 1
    return ends[:n_chain], chain_of

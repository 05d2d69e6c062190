"""
Independent reference computations used by the tests.

Nothing here calls into the package's union-find, contour-tree or raster
code: connectivity comes from scipy.sparse.csgraph on explicitly built
graphs, integrals from closed forms or dense quadrature.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.cluster.hierarchy import DisjointSet
from scipy.sparse.csgraph import connected_components


# -- sphere-complex graph (cells + two cap vertices) ---------------------------

def sphere_triangles(n_theta: int, n_s: int) -> np.ndarray:
    """Triangles of the sphere complex: two per grid square (split along the
    (+1, +1) diagonal, theta periodic), plus cap cones over the boundary rows."""
    idx = np.arange(n_theta * n_s).reshape(n_theta, n_s)
    nxt = np.roll(idx, -1, axis=0)
    v00, v10, v01, v11 = idx[:, :-1], nxt[:, :-1], idx[:, 1:], nxt[:, 1:]
    tris = [np.stack([v00, v10, v11], -1).reshape(-1, 3), np.stack([v00, v01, v11], -1).reshape(-1, 3)]
    bottom, top = n_theta * n_s, n_theta * n_s + 1
    tris.append(np.column_stack([np.full(n_theta, bottom), idx[:, 0], nxt[:, 0]]))
    tris.append(np.column_stack([np.full(n_theta, top), idx[:, -1], nxt[:, -1]]))
    return np.concatenate(tris)


def sphere_graph(n_theta: int, n_s: int):
    """Edge list (a, b) of the triangulated sphere and its vertex count."""
    tri = sphere_triangles(n_theta, n_s)
    e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]]), axis=1)
    e = np.unique(e, axis=0)
    return e[:, 0], e[:, 1], n_theta * n_s + 2


@lru_cache(maxsize=8)
def _mesh(n_theta: int, n_s: int):
    """Triangles, sorted edge keys and per-triangle edge element ids."""
    tri = sphere_triangles(n_theta, n_s)
    nv = n_theta * n_s + 2
    a, b, _ = sphere_graph(n_theta, n_s)
    key = a * nv + b
    pairs = [(0, 1), (1, 2), (0, 2)]
    eid = np.column_stack([nv + np.searchsorted(key, np.minimum(tri[:, i], tri[:, j]) * nv
                                                 + np.maximum(tri[:, i], tri[:, j])) for i, j in pairs])
    return tri, eid, nv + len(a)


def _flood(tri, eid, n_el, vin, ein):
    """Component labels of mesh elements; elements sharing a triangle are joined."""
    elem = np.concatenate([tri, eid], axis=1)
    inside = np.concatenate([vin, ein], axis=1)
    anchor = elem[np.arange(len(elem)), np.argmax(inside, axis=1)]
    sel = inside & inside.any(axis=1, keepdims=True)
    src = np.broadcast_to(anchor[:, None], elem.shape)[sel]
    g = coo_matrix((np.ones(len(src)), (src, elem[sel])), shape=(n_el, n_el))
    return connected_components(g, directed=False)[1]


def _edge_masks(r, lo_ok, hi_ok):
    pairs = [(0, 1), (1, 2), (0, 2)]
    return np.column_stack([lo_ok(np.minimum(r[:, i], r[:, j])) & hi_ok(np.maximum(r[:, i], r[:, j]))
                            for i, j in pairs])


def _components(a, b, nv, keep):
    """Component labels of the subgraph induced by the boolean mask ``keep``."""
    sel = keep[a] & keep[b]
    g = coo_matrix((np.ones(sel.sum()), (a[sel], b[sel])), shape=(nv, nv))
    _, lab = connected_components(g, directed=False)
    return lab


def level_sweep_tree(values: np.ndarray, areas: np.ndarray, n_theta: int, n_s: int) -> dict:
    """Brute-force contour-tree summary of a generic field.

    Vertices are swept upward (and downward) with scipy's DisjointSet; v is
    critical when its lower (or upper) neighbours lie in a number of
    components other than one.  Between consecutive critical levels the open
    slab is flood filled; its component areas are the pieces of the tree arcs
    crossing that slab.
    """
    a, b, nv = sphere_graph(n_theta, n_s)
    order = np.lexsort((np.arange(nv), values))
    rank = np.empty(nv, dtype=np.int64)
    rank[order] = np.arange(nv)
    nbrs = [[] for _ in range(nv)]
    for u, v in zip(a.tolist(), b.tolist()):
        nbrs[u].append(v)
        nbrs[v].append(u)

    def sweep(seq):
        ds = DisjointSet()
        seen = np.zeros(nv, dtype=bool)
        count = np.zeros(nv, dtype=np.int64)
        for v in seq.tolist():
            prev = [u for u in nbrs[v] if seen[u]]
            count[v] = len({ds[u] for u in prev})
            ds.add(v)
            for u in prev:
                ds.merge(u, v)
            seen[v] = True
        return count

    down = sweep(order)
    up = sweep(order[::-1])
    critical = (down != 1) | (up != 1)
    critical[nv - 2:] = True   # boundary roots are always kept
    n_nodes = int(critical.sum()) - _level_merges(values, np.nonzero(critical)[0], n_theta, n_s)
    leaves = int(np.count_nonzero((down == 0) | (up == 0)))
    crit_ranks = np.sort(rank[critical])
    slabs = [_slab_areas(rank, areas, n_theta, n_s, r0, r1) for r0, r1 in zip(crit_ranks[:-1], crit_ranks[1:])]
    return {"n_nodes": n_nodes, "n_leaves": leaves, "slab_areas": slabs,
            "critical_values": values[order][crit_ranks]}


def _slab_areas(rank, areas, n_theta, n_s, r0, r1) -> list[float]:
    """Areas of the components of the open slab r0 < rank < r1 of the PL surface.

    A triangle meets the slab in a convex set, so the slab's pieces (vertices
    and edges crossing it) are connected exactly when they share a triangle.
    """
    tri, eid, n_el = _mesh(n_theta, n_s)
    r = rank[tri]
    vin = (r > r0) & (r < r1)
    ein = _edge_masks(r, lambda x: x < r1, lambda x: x > r0)
    lab = _flood(tri, eid, n_el, vin, ein)
    verts = np.nonzero((rank > r0) & (rank < r1))[0]
    if len(verts) == 0:
        return []
    _, inv = np.unique(lab[verts], return_inverse=True)
    return sorted(np.bincount(inv, weights=areas[verts]).tolist())


def _level_merges(values, crit, n_theta, n_s) -> int:
    """Number of merges among equal-valued critical vertices joined by their
    common level set (a Reeb-graph node is a level-set component)."""
    merges = 0
    vals, counts = np.unique(values[crit], return_counts=True)
    for c in vals[counts > 1]:
        tri, eid, n_el = _mesh(n_theta, n_s)
        v = values[tri]
        ecross = _edge_masks(v, lambda x: x < c, lambda x: x > c)
        lab = _flood(tri, eid, n_el, v == c, ecross)
        group = crit[values[crit] == c]
        merges += len(group) - len(np.unique(lab[group]))
    return merges


def tree_slab_areas(tree, critical_values: np.ndarray) -> list[list[float]]:
    """Arc measure of the package tree inside each open slab between critical levels."""
    out = []
    for c0, c1 in zip(critical_values[:-1], critical_values[1:]):
        pieces = []
        for vals, w in zip(tree.edge_values, tree.edge_weights):
            m = float(w[(vals > c0) & (vals < c1)].sum())
            if m > 0:
                pieces.append(m)
        out.append(sorted(pieces))
    return out


# -- cylinder flood fill for curve partitions ---------------------------------

def cylinder_regions(segments: np.ndarray, n: int) -> list[float]:
    """Region areas of the unit cylinder cut by segments (x0, y0, x1, y1) with
    lifted x, computed on an n x n raster.  Wall cells are those within half a
    cell of a densely sampled segment point; their area is handed to the
    nearest free region along theta/s rows by repeated dilation."""
    wall = np.zeros((n, n), dtype=bool)
    for x0, y0, x1, y1 in segments:
        length = np.hypot(x1 - x0, y1 - y0)
        t = np.linspace(0.0, 1.0, max(int(length * n * 8), 2))
        xs = np.floor(((x0 + t * (x1 - x0)) % 1.0) * n).astype(int) % n
        ys = np.clip(np.floor((y0 + t * (y1 - y0)) * n).astype(int), 0, n - 1)
        wall[xs, ys] = True
    idx = np.arange(n * n).reshape(n, n)
    a = np.concatenate([idx.ravel(), idx[:, :-1].ravel()])
    b = np.concatenate([np.roll(idx, -1, axis=0).ravel(), idx[:, 1:].ravel()])
    free = ~wall.ravel()
    lab = _components(a, b, n * n, free)
    lab = np.where(free, lab, -1).reshape(n, n)
    # hand wall cells to neighbouring regions, one ring at a time
    while (lab < 0).any():
        new = lab.copy()
        for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
            nb = np.roll(lab, shift, axis=axis)
            if axis == 1:
                if shift == 1:
                    nb[:, 0] = -1
                else:
                    nb[:, -1] = -1
            take = (new < 0) & (nb >= 0)
            new[take] = nb[take]
        if np.array_equal(new, lab):
            break
        lab = new
    ids, counts = np.unique(lab[lab >= 0], return_counts=True)
    return sorted((counts / (n * n)).tolist())


def mask_components(mask: np.ndarray) -> list[float]:
    """Areas of the 4-connected components of a cell mask on the cylinder."""
    n_theta, n_s = mask.shape
    idx = np.arange(n_theta * n_s).reshape(n_theta, n_s)
    a = np.concatenate([idx.ravel(), idx[:, :-1].ravel()])
    b = np.concatenate([np.roll(idx, -1, axis=0).ravel(), idx[:, 1:].ravel()])
    keep = mask.ravel()
    lab = _components(a, b, n_theta * n_s, keep)
    _, counts = np.unique(lab[keep], return_counts=True)
    return sorted((counts / (n_theta * n_s)).tolist())


# -- quadrature ----------------------------------------------------------------

def linear_s_integral(lo: float = 0.01, hi: float = 0.99) -> float:
    """Exact integral over the annulus of the linear_s profile."""
    from scipy.integrate import quad
    from annulus_calabi.field import linear_s_profile
    val, _ = quad(lambda s: float(linear_s_profile(np.array([s]), lo, hi)[0]), 0.0, 1.0,
                  points=[lo, hi], limit=200)
    return val

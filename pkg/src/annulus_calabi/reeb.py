"""
Measured Reeb trees of grid fields: construction and median / percentile /
gap queries.

Ties between equal samples are broken by (value, vertex index).  After the
contour tree is built, arcs whose two ends sit at the same level (plateaus)
are contracted, so a flat region becomes one node carrying its whole area.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix

from . import _contour
from .field import ScalarField

# Percentile gaps shorter than this (in units of normalized area) are treated
# as discretization noise: the percentile is reported at the stem node.
DEFAULT_GAP_TOL = 5e-3


class ReebError(RuntimeError):
    pass


@dataclass(eq=False)
class ReebTree:
    levels: np.ndarray            # per node
    node_measure: np.ndarray      # per node (area of the node's own preimage)
    edge_lo: np.ndarray           # per edge, node id at the lower level
    edge_hi: np.ndarray           # per edge, node id at the higher level
    edge_measure: np.ndarray
    edge_values: list             # per edge, ascending sample values
    edge_weights: list            # per edge, matching areas
    bottom_root: int | None
    top_root: int | None
    total_measure: float
    vertex_node: np.ndarray = field(repr=False, default=None)  # per grid vertex, node id or -1
    vertex_edge: np.ndarray = field(repr=False, default=None)  # per grid vertex, edge id or -1
    vertex_values: np.ndarray = field(repr=False, default=None)
    grid_shape: tuple | None = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def _cached(self, key, make):
        # trees are never modified after construction, so derived data is memoized
        if key not in self._memo:
            self._memo[key] = make()
        return self._memo[key]

    @property
    def n_nodes(self) -> int:
        return len(self.levels)

    @property
    def n_edges(self) -> int:
        return len(self.edge_lo)

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node: list of (neighbour node, edge id)."""
        return self._cached("adj", self._adjacency)

    def _adjacency(self):
        adj = [[] for _ in range(self.n_nodes)]
        for e, (u, v) in enumerate(zip(self.edge_lo, self.edge_hi)):
            adj[u].append((int(v), e))
            adj[v].append((int(u), e))
        return adj

    def degrees(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.edge_lo, self.edge_hi]), minlength=self.n_nodes)

    @property
    def max_valence(self) -> int:
        return int(self.degrees().max()) if self.n_edges else 0

    @property
    def is_trivalent(self) -> bool:
        return self.max_valence <= 3

    def is_tree(self) -> bool:
        if self.n_edges != self.n_nodes - 1:
            return False
        seen = _bfs_order(self.adjacency(), 0)[0]
        return len(seen) == self.n_nodes

    def measure_sum(self) -> float:
        return float(self.node_measure.sum() + self.edge_measure.sum())

    def stem(self) -> tuple[list[int], list[int]]:
        """Node ids and edge ids on the path bottom root -> top root."""
        if self.bottom_root is None or self.top_root is None:
            raise ValueError("tree has no roots (sphere domain)")
        nodes, edges = self._cached("stem", self._stem)
        return list(nodes), list(edges)

    def _stem(self):
        order, par = _bfs_order(self.adjacency(), self.bottom_root)
        nodes = [self.top_root]
        edges = []
        while nodes[-1] != self.bottom_root:
            p, e = par[nodes[-1]]
            nodes.append(p)
            edges.append(e)
        return nodes[::-1], edges[::-1]

    def is_interval(self) -> bool:
        """True when every node lies on the stem (no branches)."""
        nodes, _ = self.stem()
        return len(nodes) == self.n_nodes

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": i, "level": float(lv), "measure": float(m)}
                for i, (lv, m) in enumerate(zip(self.levels, self.node_measure))
            ],
            "edges": [
                {
                    "id": e, "lo": int(self.edge_lo[e]), "hi": int(self.edge_hi[e]),
                    "measure": float(self.edge_measure[e]),
                    "values": [float(x) for x in self.edge_values[e]],
                    "weights": [float(x) for x in self.edge_weights[e]],
                }
                for e in range(self.n_edges)
            ],
            "bottom_root": self.bottom_root,
            "top_root": self.top_root,
            "total_measure": float(self.total_measure),
            "max_valence": self.max_valence,
            "trivalent": self.is_trivalent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReebTree":
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        edges = sorted(d["edges"], key=lambda e: e["id"])
        return cls(
            levels=np.array([n["level"] for n in nodes], dtype=float),
            node_measure=np.array([n["measure"] for n in nodes], dtype=float),
            edge_lo=np.array([e["lo"] for e in edges], dtype=np.int64),
            edge_hi=np.array([e["hi"] for e in edges], dtype=np.int64),
            edge_measure=np.array([e["measure"] for e in edges], dtype=float),
            edge_values=[np.array(e["values"], dtype=float) for e in edges],
            edge_weights=[np.array(e["weights"], dtype=float) for e in edges],
            bottom_root=d["bottom_root"],
            top_root=d["top_root"],
            total_measure=float(d["total_measure"]),
        )

    def same_as(self, other: "ReebTree") -> bool:
        return (
            np.array_equal(self.levels, other.levels)
            and np.array_equal(self.node_measure, other.node_measure)
            and np.array_equal(self.edge_lo, other.edge_lo)
            and np.array_equal(self.edge_hi, other.edge_hi)
            and np.array_equal(self.edge_measure, other.edge_measure)
            and all(np.array_equal(a, b) for a, b in zip(self.edge_values, other.edge_values))
            and self.bottom_root == other.bottom_root
            and self.top_root == other.top_root
            and self.total_measure == other.total_measure
        )


@dataclass(frozen=True)
class StemPoint:
    """A point of the tree: a node (edge is None) or a point inside an edge.

    ``offset`` is the fraction of the edge's measure lying between ``from_node``
    and the point.  ``h`` is the bottom-component measure over the total; it
    is None for points off the stem or on rootless trees.
    """

    level: float
    node: int | None = None
    edge: int | None = None
    offset: float = 0.0
    from_node: int | None = None
    h: float | None = None
    stem_index: int | None = None

    def position(self) -> tuple[int, float]:
        return (self.stem_index if self.stem_index is not None else -1, self.offset)

    def to_dict(self) -> dict:
        return {
            "level": self.level, "node": self.node, "edge": self.edge,
            "offset": self.offset, "from_node": self.from_node, "h": self.h,
        }


@dataclass(frozen=True)
class Branch:
    node: int        # stem node the branch grows from
    h: float         # normalized bottom measure at that node
    measure: float


@dataclass(frozen=True)
class GapReport:
    gaps: list       # (h_lo, h_hi, measure)
    branches: list   # Branch

    @property
    def total_gap_length(self) -> float:
        return float(sum(hi - lo for lo, hi, _ in self.gaps))

    def to_dict(self) -> dict:
        return {
            "gaps": [{"h_lo": lo, "h_hi": hi, "measure": m} for lo, hi, m in self.gaps],
            "branches": [{"node": b.node, "h": b.h, "measure": b.measure} for b in self.branches],
        }


def _bfs_order(adj, start):
    par = {start: (None, None)}
    order = [start]
    dq = deque([start])
    while dq:
        u = dq.popleft()
        for v, e in adj[u]:
            if v not in par:
                par[v] = (u, e)
                order.append(v)
                dq.append(v)
    return order, par


# -- construction --------------------------------------------------------------

def _vertex_arrays(f: ScalarField):
    values = np.concatenate([f.samples.ravel(), np.array(f.caps, dtype=float)])
    a, b = f.cap_areas
    areas = np.concatenate([np.full(f.grid.n_cells, f.grid.cell_area), np.array([a, b])])
    return values, areas


def vertex_order(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total order by (value, index) and its inverse."""
    order = np.lexsort((np.arange(len(values)), values)).astype(np.int64)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return order, rank


def augmented_contour_tree(f: ScalarField) -> np.ndarray:
    """Contour tree on all grid vertices, as an (V - 1, 2) arc array."""
    values, _ = _vertex_arrays(f)
    order, rank = vertex_order(values)
    arcs = _contour.contour_arcs(order, rank, f.grid.n_theta, f.grid.n_s)
    if len(arcs) != len(values) - 1:
        raise ReebError(
            f"contour tree has {len(arcs)} arcs for {len(values)} vertices; the domain graph is disconnected"
        )
    return arcs


def build_reeb_tree(f: ScalarField, *, collapse_plateaus: bool = True, keep_roots: bool = True) -> ReebTree:
    """Measured Reeb tree of f.  Annulus fields get the two boundary caps as roots."""
    values, areas = _vertex_arrays(f)
    order, rank = vertex_order(values)
    nv = len(values)
    arcs = augmented_contour_tree(f)

    adj = coo_matrix((np.ones(2 * len(arcs)), (np.r_[arcs[:, 0], arcs[:, 1]], np.r_[arcs[:, 1], arcs[:, 0]])),
                     shape=(nv, nv)).tocsr()
    adj.sort_indices()
    indptr, indices = adj.indptr.astype(np.int64), adj.indices.astype(np.int64)
    deg = np.diff(indptr)
    is_node = deg != 2
    two = np.nonzero(deg == 2)[0]
    n0, n1 = indices[indptr[two]], indices[indptr[two] + 1]
    same_side = (rank[n0] > rank[two]) == (rank[n1] > rank[two])
    is_node[two[same_side]] = True
    rooted = not f.on_sphere
    if rooted and keep_roots:
        is_node[nv - 2:] = True
    ends, chain_of = _contour.compress_chains(nv, indptr, indices, is_node)

    node_vertices = np.nonzero(is_node)[0]
    node_id = np.full(nv, -1, dtype=np.int64)
    node_id[node_vertices] = np.arange(len(node_vertices))

    # Contract plateau arcs: both end nodes at the same level.
    uf = np.arange(len(node_vertices))

    def find(x):
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    ends_n = node_id[ends]
    plateau = np.zeros(len(ends), dtype=bool)
    if collapse_plateaus:
        plateau = values[ends[:, 0]] == values[ends[:, 1]]
        for a, b in ends_n[plateau]:
            ra, rb = find(a), find(b)
            if ra != rb:
                uf[max(ra, rb)] = min(ra, rb)
    roots_of = np.array([find(x) for x in range(len(node_vertices))], dtype=np.int64)
    uniq, merged = np.unique(roots_of, return_inverse=True)
    n_nodes = len(uniq)

    levels = np.empty(n_nodes)
    levels[merged] = values[node_vertices]
    node_measure = np.bincount(merged, weights=areas[node_vertices], minlength=n_nodes)

    # Vertex ownership.
    vertex_node = np.full(nv, -1, dtype=np.int64)
    vertex_node[node_vertices] = merged
    chain_plateau_node = merged[ends_n[:, 0]]
    on_chain = chain_of >= 0
    in_plateau = on_chain & plateau[np.where(on_chain, chain_of, 0)]
    vertex_node[in_plateau] = chain_plateau_node[chain_of[in_plateau]]
    node_measure += np.bincount(vertex_node[in_plateau], weights=areas[in_plateau], minlength=n_nodes)

    keep = np.nonzero(~plateau)[0]
    edge_index = np.full(len(ends), -1, dtype=np.int64)
    edge_index[keep] = np.arange(len(keep))
    vertex_edge = np.full(nv, -1, dtype=np.int64)
    vertex_edge[on_chain & ~in_plateau] = edge_index[chain_of[on_chain & ~in_plateau]]

    u = merged[ends_n[keep, 0]]
    v = merged[ends_n[keep, 1]]
    ru = rank[ends[keep, 0]]
    rv = rank[ends[keep, 1]]
    edge_lo = np.where(ru < rv, u, v)
    edge_hi = np.where(ru < rv, v, u)

    # Regular vertices sitting exactly at an end level belong to that plateau node.
    if collapse_plateaus:
        idx = np.nonzero(vertex_edge >= 0)[0]
        e_of = vertex_edge[idx]
        for end in (edge_lo, edge_hi):
            flat = values[idx] == levels[end[e_of]]
            vertex_node[idx[flat]] = end[e_of[flat]]
            vertex_edge[idx[flat]] = -1
            node_measure += np.bincount(end[e_of[flat]], weights=areas[idx[flat]], minlength=n_nodes)
            idx, e_of = idx[~flat], e_of[~flat]

    ev = vertex_edge[vertex_edge >= 0]
    idx = np.nonzero(vertex_edge >= 0)[0]
    srt = np.lexsort((rank[idx], ev))
    idx, ev = idx[srt], ev[srt]
    bounds = np.searchsorted(ev, np.arange(len(keep) + 1))
    edge_values = [values[idx[bounds[k]:bounds[k + 1]]] for k in range(len(keep))]
    edge_weights = [areas[idx[bounds[k]:bounds[k + 1]]] for k in range(len(keep))]
    edge_measure = np.array([w.sum() for w in edge_weights], dtype=float)

    bottom = top = None
    if rooted:
        bottom = int(vertex_node[nv - 2]) if vertex_node[nv - 2] >= 0 else None
        top = int(vertex_node[nv - 1]) if vertex_node[nv - 1] >= 0 else None

    tree = ReebTree(
        levels=levels, node_measure=node_measure, edge_lo=edge_lo.astype(np.int64),
        edge_hi=edge_hi.astype(np.int64), edge_measure=edge_measure, edge_values=edge_values,
        edge_weights=edge_weights, bottom_root=bottom, top_root=top,
        total_measure=float(areas.sum()), vertex_node=vertex_node, vertex_edge=vertex_edge, vertex_values=values,
        grid_shape=f.grid.shape,
    )
    if not tree.is_tree():
        raise ReebError("constructed graph is not a tree; the field is corrupt")
    return tree


# -- queries ------------------------------------------------------------------

def _subtree_measures(t: ReebTree, root: int):
    return t._cached(("sub", root), lambda: _subtree_measures_uncached(t, root))


def _subtree_measures_uncached(t: ReebTree, root: int):
    adj = t.adjacency()
    order, par = _bfs_order(adj, root)
    sub = t.node_measure.astype(float).copy()
    for n in reversed(order):
        p, e = par[n]
        if p is not None:
            sub[p] += sub[n] + t.edge_measure[e]
    return adj, par, sub


def _side_measure(t, par, sub, n, m, e):
    """Measure of the component containing m after deleting edge e = (n, m) entirely."""
    if par[m][0] == n:
        return sub[m]
    return t.total_measure - sub[n] - t.edge_measure[e]


def _level_along(t: ReebTree, e: int, from_node: int, mass: float) -> float:
    """Level at the point of edge e that has ``mass`` of the edge between it and from_node."""
    vals, w = t.edge_values[e], t.edge_weights[e]
    lo_level, hi_level = t.levels[t.edge_lo[e]], t.levels[t.edge_hi[e]]
    m_e = t.edge_measure[e]
    if from_node == t.edge_hi[e]:
        vals, w = vals[::-1], w[::-1]
        start, end = hi_level, lo_level
    else:
        start, end = lo_level, hi_level
    if len(vals) == 0 or m_e <= 0:
        frac = 0.0 if m_e <= 0 else mass / m_e
        return float(start + (end - start) * frac)
    centres = np.cumsum(w) - w / 2.0
    xs = np.concatenate([[0.0], centres, [m_e]])
    ys = np.concatenate([[start], vals, [end]])
    return float(np.interp(mass, xs, ys))


def find_median(t: ReebTree) -> StemPoint:
    """The point whose complementary components all carry at most half the measure."""
    half = t.total_measure / 2.0
    eps = 1e-12 * max(1.0, t.total_measure)
    root = t.bottom_root if t.bottom_root is not None else 0
    adj, par, sub = _subtree_measures(t, root)
    n, came_from = root, None
    for _ in range(t.n_nodes + 1):
        heavy = None
        for m, e in adj[n]:
            comp = t.edge_measure[e] + _side_measure(t, par, sub, n, m, e)
            if comp > half + eps:
                heavy = (m, e)
                break
        if heavy is None:
            return _annotate(t, StemPoint(level=float(t.levels[n]), node=n))
        m, e = heavy
        side_m = _side_measure(t, par, sub, n, m, e)
        side_n = t.total_measure - t.edge_measure[e] - side_m
        need = half - side_n
        if need >= -eps and side_m < half - eps:
            need = min(max(need, 0.0), t.edge_measure[e])
            level = _level_along(t, e, n, need)
            off = need / t.edge_measure[e] if t.edge_measure[e] > 0 else 0.0
            return _annotate(t, StemPoint(level=level, edge=e, offset=off, from_node=n))
        came_from, n = n, m
    raise ReebError("median search did not terminate")  # pragma: no cover


def _annotate(t: ReebTree, p: StemPoint) -> StemPoint:
    """Attach h and stem index when the point lies on the stem of a rooted tree."""
    if t.bottom_root is None or t.top_root is None or t.bottom_root == t.top_root:
        return p
    nodes, edges = t.stem()
    profile = _stem_profile(t, nodes, edges)
    if p.node is not None and p.node in nodes:
        k = nodes.index(p.node)
        return StemPoint(p.level, node=p.node, h=profile[k][0] / t.total_measure, stem_index=2 * k)
    if p.edge is not None and p.edge in edges:
        k = edges.index(p.edge)
        mass = p.offset * t.edge_measure[p.edge]
        if p.from_node != nodes[k]:
            mass = t.edge_measure[p.edge] - mass
        below = profile[k][0] + profile[k][1] + mass
        return StemPoint(p.level, edge=p.edge, offset=mass / t.edge_measure[p.edge] if t.edge_measure[p.edge] else 0.0,
                         from_node=nodes[k], h=below / t.total_measure, stem_index=2 * k + 1)
    return p


def _stem_profile(t: ReebTree, nodes, edges):
    """Per stem node: (measure strictly below it, node + branch measure, branch measure)."""
    return t._cached("profile", lambda: _stem_profile_uncached(t, nodes, edges))


def _stem_profile_uncached(t: ReebTree, nodes, edges):
    adj, par, sub = _subtree_measures(t, t.bottom_root)
    on_stem = set(nodes)
    out = []
    below = 0.0
    for k, n in enumerate(nodes):
        branch = 0.0
        for m, e in adj[n]:
            if m not in on_stem:
                branch += t.edge_measure[e] + _side_measure(t, par, sub, n, m, e)
        block = t.node_measure[n] + branch
        out.append((below, block, branch))
        if k < len(edges):
            below += block + t.edge_measure[edges[k]]
    return out


def _branches_at(t: ReebTree, n, on_stem, adj, par, sub):
    return [
        t.edge_measure[e] + _side_measure(t, par, sub, n, m, e)
        for m, e in adj[n] if m not in on_stem
    ]


def find_percentile(t: ReebTree, h: float, gap_tol: float = DEFAULT_GAP_TOL) -> StemPoint | None:
    """Stem point whose bottom component has measure h * total, or None inside a gap."""
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"percentile h must lie in [0, 1], got {h}")
    if t.bottom_root is None or t.top_root is None:
        raise ValueError("percentiles need a rooted (annulus) tree")
    if t.bottom_root == t.top_root:
        # one level set touches both boundaries: nothing in between separates them
        if h in (0.0, 1.0):
            return StemPoint(float(t.levels[t.bottom_root]), node=t.bottom_root, h=h, stem_index=0)
        return None
    nodes, edges = t.stem()
    profile = _stem_profile(t, nodes, edges)
    target = h * t.total_measure
    tol = gap_tol * t.total_measure
    eps = 1e-12
    for k, n in enumerate(nodes):
        below, block, branch = profile[k]
        if target <= below + eps or (target <= below + block + eps and branch <= tol):
            return StemPoint(float(t.levels[n]), node=n, h=h, stem_index=2 * k)
        if target < below + block - eps:
            return None
        if k < len(edges):
            e = edges[k]
            start = below + block
            if target <= start + t.edge_measure[e] + eps:
                mass = min(max(target - start, 0.0), t.edge_measure[e])
                off = mass / t.edge_measure[e] if t.edge_measure[e] > 0 else 0.0
                return StemPoint(_level_along(t, e, n, mass), edge=e, offset=off, from_node=n,
                                 h=h, stem_index=2 * k + 1)
    return StemPoint(float(t.levels[nodes[-1]]), node=nodes[-1], h=h, stem_index=2 * (len(nodes) - 1))


def percentile_gaps(t: ReebTree, gap_tol: float = DEFAULT_GAP_TOL) -> GapReport:
    """Intervals of h with no percentile, one per stem node carrying branches or a plateau."""
    if t.bottom_root is None or t.top_root is None:
        raise ValueError("percentile gaps need a rooted (annulus) tree")
    nodes, edges = t.stem()
    profile = _stem_profile(t, nodes, edges)
    adj, par, sub = _subtree_measures(t, t.bottom_root)
    on_stem = set(nodes)
    total = t.total_measure
    gaps, branches = [], []
    if t.bottom_root == t.top_root:
        n = t.bottom_root
        branches = [Branch(node=n, h=0.0, measure=float(m)) for m in _branches_at(t, n, on_stem, adj, par, sub)]
        return GapReport(gaps=[(0.0, 1.0, float(total))], branches=branches)
    for k, n in enumerate(nodes):
        below, block, branch = profile[k]
        if branch / total <= gap_tol:
            continue
        lo, hi = below / total, (below + block) / total
        gaps.append((lo, hi, float(block)))
        for m in _branches_at(t, n, on_stem, adj, par, sub):
            branches.append(Branch(node=n, h=lo, measure=float(m)))
    return GapReport(gaps=gaps, branches=branches)


def branch_vertices(t: ReebTree, node: int) -> np.ndarray:
    """Grid vertices in the largest off-stem branch growing at ``node``."""
    nodes, _ = t.stem()
    on_stem = set(nodes)
    adj, par, sub = _subtree_measures(t, t.bottom_root)
    best, best_m = None, -1.0
    for m, e in adj[node]:
        if m in on_stem:
            continue
        meas = t.edge_measure[e] + _side_measure(t, par, sub, node, m, e)
        if meas > best_m:
            best, best_m = (m, e), meas
    if best is None:
        return np.zeros(0, dtype=np.int64)
    m, e = best
    comp_nodes, comp_edges = {m}, {e}
    stack = [m]
    while stack:
        x = stack.pop()
        for y, ee in adj[x]:
            if y != node and y not in comp_nodes:
                comp_nodes.add(y)
                comp_edges.add(ee)
                stack.append(y)
    mask = np.isin(t.vertex_node, list(comp_nodes)) | np.isin(t.vertex_edge, list(comp_edges))
    return np.nonzero(mask)[0]


def bottom_side_mask(t: ReebTree, p: StemPoint) -> np.ndarray:
    """Grid cells (n_theta, n_s) on the bottom-root side of a stem point."""
    nodes, edges = t.stem()
    adj = t.adjacency()
    if p.node is not None:
        cut_node, cut_edge = p.node, None
    else:
        cut_node, cut_edge = None, p.edge
    below_nodes = {t.bottom_root} if t.bottom_root != cut_node else set()
    below_edges = set()
    stack = list(below_nodes)
    while stack:
        x = stack.pop()
        for y, e in adj[x]:
            if e == cut_edge or y == cut_node or y in below_nodes:
                continue
            below_nodes.add(y)
            below_edges.add(e)
            stack.append(y)
    mask = np.isin(t.vertex_node, list(below_nodes)) | np.isin(t.vertex_edge, list(below_edges))
    if cut_edge is not None:
        idx = np.nonzero(t.vertex_edge == cut_edge)[0]
        k = edges.index(cut_edge)
        going_up = nodes[k] == t.edge_lo[cut_edge]
        vals = t.vertex_values[idx]
        mask[idx[vals < p.level if going_up else vals > p.level]] = True
    n_cells = int(np.prod(t.grid_shape))
    return mask[:n_cells].reshape(t.grid_shape)

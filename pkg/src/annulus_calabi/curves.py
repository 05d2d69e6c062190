"""
Curve systems on the annulus, the area partition cut out by a pair of them,
and transport of curves by flow maps.

Polylines carry theta in the universal cover; every segment is read as the
shortest arc between its endpoints on the cylinder, so consecutive vertices
must stay less than half a turn apart (transport keeps them within a cell).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from . import _segments
from .field import AnnulusGrid
from .flow import FlowMap

MIN_CROSSING_SIN = 1e-3     # crossings flatter than this are treated as tangencies
BOUNDARY_TOL = 1e-9
MAX_VERTICES = 1_000_000
ADJACENCY_SUPPORT = 2       # boundary length, in cells, needed to call two regions adjacent
OVERSAMPLE = 4              # wall raster resolution relative to the grid


class TransversalityError(ValueError):
    pass


class RefinementBlowup(RuntimeError):
    pass


@dataclass(frozen=True)
class CurveSystem:
    components: tuple       # (k, 2) arrays of (theta_lift, s)
    closed: tuple           # one bool per component

    def __post_init__(self):
        comps = tuple(np.array(c, dtype=float).reshape(-1, 2) for c in self.components)
        closed = tuple(bool(c) for c in self.closed)
        if len(comps) != len(closed):
            raise ValueError("one closed flag per component is required")
        for c, cl in zip(comps, closed):
            if len(c) < (3 if cl else 2):
                raise ValueError("component has too few vertices")
            if np.any(c[:, 1] < -BOUNDARY_TOL) or np.any(c[:, 1] > 1 + BOUNDARY_TOL):
                raise ValueError("vertex outside the annulus")
            if not cl:
                ends = sorted([c[0, 1], c[-1, 1]])
                if abs(ends[0]) > BOUNDARY_TOL or abs(ends[1] - 1.0) > BOUNDARY_TOL:
                    raise ValueError("a proper component must run from s = 0 to s = 1")
            c.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "closed", closed)

    @property
    def n_vertices(self) -> int:
        return sum(len(c) for c in self.components)

    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x0, y0, x1, y1) with x0 in [0, 1), plus component and position ids."""
        rows, comp, idx = [], [], []
        for k, (c, cl) in enumerate(zip(self.components, self.closed)):
            a = c
            b = np.roll(c, -1, axis=0) if cl else c[1:]
            a = a[: len(b)]
            x0 = a[:, 0] % 1.0
            dx = (b[:, 0] - a[:, 0] + 0.5) % 1.0 - 0.5
            rows.append(np.column_stack([x0, a[:, 1], x0 + dx, b[:, 1]]))
            comp.append(np.full(len(a), k))
            idx.append(np.arange(len(a)))
        if not rows:
            return np.zeros((0, 4)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(rows), np.concatenate(comp), np.concatenate(idx)

    def max_gap(self) -> float:
        seg, _, _ = self.segments()
        if len(seg) == 0:
            return 0.0
        return float(np.hypot(seg[:, 2] - seg[:, 0], seg[:, 3] - seg[:, 1]).max())

    def to_dict(self) -> dict:
        return {"components": [{"closed": cl, "points": np.round(c, 15).tolist()}
                               for c, cl in zip(self.components, self.closed)]}

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSystem":
        comps = d.get("components", [])
        return cls(tuple(np.array(c["points"], dtype=float) for c in comps),
                   tuple(bool(c.get("closed", False)) for c in comps))

    @classmethod
    def empty(cls) -> "CurveSystem":
        return cls((), ())


def chords(thetas, n_vertices: int = 65) -> CurveSystem:
    """Vertical chords {theta} x [0, 1]."""
    s = np.linspace(0.0, 1.0, n_vertices)
    return CurveSystem(tuple(np.column_stack([np.full_like(s, t), s]) for t in thetas),
                       (False,) * len(thetas))


def two_chords(shift: float = 0.0, n_vertices: int = 65) -> CurveSystem:
    """The pair of chords at theta = shift and shift + 1/2."""
    return chords([shift, shift + 0.5], n_vertices)


def circle(s0: float, n_vertices: int = 64) -> CurveSystem:
    """The core circle S^1 x {s0} as a closed polyline."""
    th = np.arange(n_vertices) / n_vertices
    return CurveSystem((np.column_stack([th, np.full_like(th, s0)]),), (True,))


@dataclass(frozen=True)
class Crossing:
    theta: float
    s: float
    sin_angle: float
    first: int      # component of l1
    second: int     # component of l2


@dataclass
class PartitionInvariant:
    areas: list             # ascending
    adjacency: list         # (region_i, region_j, sorted curve labels)
    intersection_count: int
    crossings: list = dc_field(default_factory=list)
    labels: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def n_regions(self) -> int:
        return len(self.areas)

    def to_dict(self) -> dict:
        return {
            "areas": [float(a) for a in self.areas],
            "adjacency": [{"regions": [i, j], "curves": list(c)} for i, j, c in self.adjacency],
            "crossings": self.intersection_count,
        }


def _crossing_rows(systems, mode: int) -> tuple[np.ndarray, list]:
    segs, group, comp, index, meta = [], [], [], [], []
    closed_last = []
    comp_base = 0
    for g, cs in enumerate(systems):
        seg, c, i = cs.segments()
        segs.append(seg)
        group.append(np.full(len(seg), g))
        comp.append(c + comp_base)
        index.append(i)
        for k, (pts, cl) in enumerate(zip(cs.components, cs.closed)):
            closed_last.append(len(pts) - 1 if cl else -1)
            meta.append((g, k))
        comp_base += len(cs.components)
    if not segs or sum(len(s) for s in segs) == 0:
        return np.zeros((0, 5)), meta
    seg = np.concatenate(segs)
    ident = np.arange(len(seg))
    wseg, wid = _segments.wrap_segments(seg, ident)
    group = np.concatenate(group)[wid]
    comp = np.concatenate(comp)[wid]
    index = np.concatenate(index)[wid]
    nb = int(min(256, max(1, math.sqrt(len(wseg)) / 2)))
    rows = _segments.crossings(wseg, group, comp, index, np.array(closed_last, dtype=np.int64), nb, mode)
    rows = rows.copy()
    if len(rows):
        rows[:, 0] = comp[rows[:, 0].astype(np.int64)]
        rows[:, 1] = comp[rows[:, 1].astype(np.int64)]
    return rows, meta


def find_crossings(l1: CurveSystem, l2: CurveSystem) -> list[Crossing]:
    """Interior crossings of l1 with l2, sorted by position."""
    rows, meta = _crossing_rows((l1, l2), 0)
    out = []
    for a, b, x, y, sn in rows:
        if y <= BOUNDARY_TOL or y >= 1.0 - BOUNDARY_TOL:
            continue
        ga, ka = meta[int(a)]
        gb, kb = meta[int(b)]
        if ga == 1:
            ka, kb = kb, ka
        out.append(Crossing(float(x), float(y), float(sn), ka, kb))
    out.sort(key=lambda c: (c.s, c.theta))
    return out


def self_intersections(l: CurveSystem) -> int:
    rows, _ = _crossing_rows((l,), 1)
    if len(rows) == 0:
        return 0
    inner = (rows[:, 3] > BOUNDARY_TOL) & (rows[:, 3] < 1.0 - BOUNDARY_TOL)
    return int(inner.sum())


def _raster(seg: np.ndarray, grid: AnnulusGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cells visited by samples at most 0.2 cells apart along each segment,
    with the index of the segment each sample came from."""
    if len(seg) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z
    dx = (seg[:, 2] - seg[:, 0]) * grid.n_theta
    dy = (seg[:, 3] - seg[:, 1]) * grid.n_s
    n = np.maximum(1, np.ceil(np.maximum(np.abs(dx), np.abs(dy)) / 0.2).astype(np.int64))
    owner = np.repeat(np.arange(len(seg)), n + 1)
    start = np.repeat(np.cumsum(n + 1) - (n + 1), n + 1)
    t = (np.arange(owner.size) - start) / np.repeat(n, n + 1)
    x = seg[owner, 0] + t * (seg[owner, 2] - seg[owner, 0])
    y = seg[owner, 1] + t * (seg[owner, 3] - seg[owner, 1])
    i = np.floor(x * grid.n_theta).astype(np.int64) % grid.n_theta
    j = np.clip(np.floor(y * grid.n_s).astype(np.int64), 0, grid.n_s - 1)
    return i, j, owner


def _label_cylinder(free: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of free cells with theta wrapping; labels 1..k, 0 on walls."""
    lab, n = ndimage.label(free)
    if n == 0:
        return lab, 0
    parent = np.arange(n + 1)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    a, b = lab[0], lab[-1]
    for u, v in zip(a[(a > 0) & (b > 0)], b[(a > 0) & (b > 0)]):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    roots = np.array([find(x) for x in range(n + 1)])
    uniq, dense = np.unique(roots, return_inverse=True)
    dense = dense.astype(np.int64)
    # root 0 is the wall label and is the smallest, so it stays 0
    return dense[lab], len(uniq) - 1


def _nearest_owner(lab: np.ndarray) -> np.ndarray:
    """Region of every cell: free cells keep their label, wall cells take the
    label of the nearest free cell (Euclidean, theta periodic)."""
    n = lab.shape[0]
    tiled = np.concatenate([lab, lab, lab], axis=0)
    _, (ii, jj) = ndimage.distance_transform_edt(tiled == 0, return_indices=True)
    return tiled[ii, jj][n:2 * n]


def _adjacency(owner: np.ndarray, wall: np.ndarray, cell_curve: np.ndarray, names: list,
               min_support: int) -> list:
    """Region pairs whose owner boundary runs through wall cells, with the curves there."""
    n_theta, n_s = owner.shape
    flat = np.arange(owner.size).reshape(owner.shape)
    pairs = []
    for x, y in ((flat, np.roll(flat, -1, axis=0)), (flat[:, :-1], flat[:, 1:])):
        x, y = x.ravel(), y.ravel()
        ox, oy = owner.ravel()[x], owner.ravel()[y]
        keep = (ox != oy) & (wall.ravel()[x] | wall.ravel()[y])
        lo, hi = np.minimum(ox, oy)[keep], np.maximum(ox, oy)[keep]
        pairs += [np.column_stack([lo, hi, x[keep]]), np.column_stack([lo, hi, y[keep]])]
    rows = np.concatenate(pairs)
    if len(rows) == 0:
        return []
    edges = np.unique(rows[:, :2], axis=0, return_counts=True)
    support = {(int(a), int(b)): int(c) // 2 for (a, b), c in zip(*edges)}
    # curves carried by the wall cells on each boundary
    order = np.argsort(cell_curve[:, 0], kind="stable")
    cc = cell_curve[order]
    start = np.searchsorted(cc[:, 0], rows[:, 2], "left")
    stop = np.searchsorted(cc[:, 0], rows[:, 2], "right")
    cnt = stop - start
    rep = np.repeat(np.arange(len(rows)), cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    tagged = np.unique(np.column_stack([rows[rep, 0], rows[rep, 1], cc[np.repeat(start, cnt) + off, 1]]), axis=0)
    curves: dict = {}
    for a, b, k in tagged:
        curves.setdefault((int(a), int(b)), set()).add(names[int(k)])
    return [(a, b, tuple(sorted(curves.get((a, b), ())))) for (a, b), c in sorted(support.items())
            if c >= min_support]


def complement_partition(l1: CurveSystem, l2: CurveSystem, grid: AnnulusGrid,
                         min_crossing_sin: float = MIN_CROSSING_SIN,
                         oversample: int = OVERSAMPLE) -> PartitionInvariant:
    """Areas and adjacency of the regions of the annulus cut by both curve systems.

    The walls are rasterized on a grid ``oversample`` times finer than ``grid``;
    every wall cell is credited to the nearest free region.  ``labels`` are
    reported on that finer grid.
    """
    if int(oversample) < 1:
        raise ValueError("oversample must be a positive integer")
    for name, l in (("l1", l1), ("l2", l2)):
        if self_intersections(l):
            raise TransversalityError(f"{name} is not embedded (self-intersections found)")
    cross = find_crossings(l1, l2)
    flat = [c for c in cross if c.sin_angle < min_crossing_sin]
    if flat:
        c = flat[0]
        raise TransversalityError(
            f"{len(flat)} non-transverse crossing(s), e.g. at ({c.theta:.6f}, {c.s:.6f}) "
            f"with sin(angle) = {c.sin_angle:.2e}")

    r = int(oversample)
    fine = AnnulusGrid(grid.n_theta * r, grid.n_s * r)
    wall = np.zeros(fine.shape, dtype=bool)
    names, tags = [], []
    for g, l in enumerate((l1, l2)):
        seg, comp, _ = l.segments()
        i, j, owner = _raster(seg, fine)
        wall[i, j] = True
        tags.append(np.column_stack([i * fine.n_s + j, len(names) + comp[owner]]))
        names += [f"l{g + 1}:{k}" for k in range(len(l.components))]
    cell_curve = np.unique(np.concatenate(tags), axis=0)

    lab, n_regions = _label_cylinder(~wall)
    if n_regions == 0:
        raise ValueError("curves cover the whole grid; refine the grid")
    owner = _nearest_owner(lab)
    area = np.bincount(owner.ravel() - 1, minlength=n_regions) * fine.cell_area

    # deterministic order: by area, then by the leftmost (theta, s) cell
    first = np.full(n_regions, fine.n_cells, dtype=np.int64)
    flat_lab = lab.ravel()
    pos = np.arange(flat_lab.size)
    np.minimum.at(first, flat_lab[flat_lab > 0] - 1, pos[flat_lab > 0])
    order = sorted(range(n_regions), key=lambda k: (round(float(area[k]), 12), int(first[k])))
    relabel = np.zeros(n_regions + 1, dtype=np.int64)
    relabel[np.array(order) + 1] = np.arange(n_regions) + 1
    owner = relabel[owner]
    adjacency = [(a - 1, b - 1, c) for a, b, c in
                 _adjacency(owner, wall, cell_curve, names, ADJACENCY_SUPPORT * r)]
    return PartitionInvariant(
        areas=[float(area[k]) for k in order],
        adjacency=adjacency,
        intersection_count=len(cross),
        crossings=cross,
        labels=owner,
    )


def _grid_spacing(m: FlowMap) -> float:
    for leg in m.legs:
        g = leg.field.grid
        return min(1.0 / g.n_theta, 1.0 / g.n_s)
    return math.inf     # the identity has no grid and needs no refinement


def transport(l: CurveSystem, m: FlowMap, spacing: float | None = None,
              max_vertices: int = MAX_VERTICES) -> CurveSystem:
    """Image of every component under m, refined until image vertices are at most
    ``spacing`` (default: one grid cell) apart."""
    spacing = _grid_spacing(m) if spacing is None else float(spacing)
    comps = []
    for c, cl in zip(l.components, l.closed):
        pre = np.array(c, dtype=float)
        img = _map(m, pre)
        while True:
            if cl:
                # deck shift that brings the first vertex next to the last one
                k = round(pre[-1, 0] - pre[0, 0])
                nxt_pre = np.vstack([pre[1:], pre[:1] + [k, 0.0]])
                nxt_img = np.vstack([img[1:], img[:1] + [k, 0.0]])
                cur_pre, cur_img = pre, img
            else:
                nxt_pre, nxt_img = pre[1:], img[1:]
                cur_pre, cur_img = pre[:-1], img[:-1]
            d = np.hypot(nxt_img[:, 0] - cur_img[:, 0], nxt_img[:, 1] - cur_img[:, 1])
            long = np.nonzero(d > spacing)[0]
            if len(long) == 0:
                break
            if len(pre) + len(long) + sum(len(x) for x in comps) > max_vertices:
                raise RefinementBlowup(f"transport needs more than {max_vertices} vertices")
            mid = 0.5 * (cur_pre[long] + nxt_pre[long])
            pre = np.insert(pre, long + 1, mid, axis=0)
            img = np.insert(img, long + 1, _map(m, mid), axis=0)
        comps.append(img)
    return CurveSystem(tuple(comps), l.closed)


def _map(m: FlowMap, pts: np.ndarray) -> np.ndarray:
    # Boundary vertices are mapped like the rest: the sampled flow keeps each
    # boundary circle invariant but may turn it slightly, and pinning them
    # would tear the curve.
    return m(pts)

"""
Compiled segment-intersection search on the cylinder S^1 x [0, 1].

Segments are (x0, y0, x1, y1) with x0 in [0, 1) and x1 = x0 + minimal-image
offset.  Segments that cross the seam are duplicated with a shift, and a
crossing is reported only from the bucket that contains its (wrapped) point,
so every crossing appears exactly once.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


def wrap_segments(seg: np.ndarray, ident: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Add shifted copies of the segments that leave [0, 1) in x."""
    lo = np.minimum(seg[:, 0], seg[:, 2])
    hi = np.maximum(seg[:, 0], seg[:, 2])
    right = hi >= 1.0
    left = lo < 0.0
    parts = [seg]
    ids = [ident]
    if right.any():
        s = seg[right].copy()
        s[:, [0, 2]] -= 1.0
        parts.append(s)
        ids.append(ident[right])
    if left.any():
        s = seg[left].copy()
        s[:, [0, 2]] += 1.0
        parts.append(s)
        ids.append(ident[left])
    return np.ascontiguousarray(np.concatenate(parts)), np.concatenate(ids)


@njit(cache=True)
def _bucket_range(a, b, nb):
    lo = min(a, b)
    hi = max(a, b)
    i0 = int(math.floor(lo * nb))
    i1 = int(math.floor(hi * nb))
    if i0 < 0:
        i0 = 0
    if i1 > nb - 1:
        i1 = nb - 1
    return i0, i1


@njit(cache=True)
def crossings(seg, group, comp, index, closed_last, nb, mode):
    """All proper crossings between segments.

    group: which curve system a segment belongs to; comp/index identify its
    component and position; closed_last[c] is the last segment index of a
    closed component (or -1).  mode 0 reports pairs from different groups,
    mode 1 pairs within one group (self-intersections), skipping neighbours.
    Returns rows (seg_a, seg_b, x, y, sin_angle).
    """
    n = seg.shape[0]
    counts = np.zeros(nb * nb + 1, dtype=np.int64)
    for k in range(n):
        i0, i1 = _bucket_range(seg[k, 0], seg[k, 2], nb)
        j0, j1 = _bucket_range(seg[k, 1], seg[k, 3], nb)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                counts[i * nb + j + 1] += 1
    for b in range(nb * nb):
        counts[b + 1] += counts[b]
    fill = counts[:-1].copy()
    members = np.empty(counts[-1], dtype=np.int64)
    for k in range(n):
        i0, i1 = _bucket_range(seg[k, 0], seg[k, 2], nb)
        j0, j1 = _bucket_range(seg[k, 1], seg[k, 3], nb)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                members[fill[i * nb + j]] = k
                fill[i * nb + j] += 1
    cap = 64
    out = np.empty((cap, 5))
    n_out = 0
    for b in range(nb * nb):
        bi = b // nb
        bj = b % nb
        for p in range(counts[b], counts[b + 1]):
            u = members[p]
            for q in range(p + 1, counts[b + 1]):
                v = members[q]
                same = group[u] == group[v]
                if mode == 0 and same:
                    continue
                if mode == 1:
                    if not same:
                        continue
                    if comp[u] == comp[v]:
                        d = abs(index[u] - index[v])
                        if d <= 1:
                            continue
                        last = closed_last[comp[u]]
                        if last >= 0 and d == last:
                            continue
                ax, ay = seg[u, 0], seg[u, 1]
                dx1, dy1 = seg[u, 2] - ax, seg[u, 3] - ay
                bx, by = seg[v, 0], seg[v, 1]
                dx2, dy2 = seg[v, 2] - bx, seg[v, 3] - by
                den = dx1 * dy2 - dy1 * dx2
                if den == 0.0:
                    continue
                ex, ey = bx - ax, by - ay
                t = (ex * dy2 - ey * dx2) / den
                r = (ex * dy1 - ey * dx1) / den
                if t < 0.0 or t >= 1.0 or r < 0.0 or r >= 1.0:
                    continue
                x = ax + t * dx1
                y = ay + t * dy1
                if x < 0.0 or x >= 1.0:
                    continue
                xi = min(int(math.floor(x * nb)), nb - 1)
                yi = min(max(int(math.floor(y * nb)), 0), nb - 1)
                if xi != bi or yi != bj:
                    continue
                if n_out == cap:
                    cap *= 2
                    grown = np.empty((cap, 5))
                    grown[:n_out] = out[:n_out]
                    out = grown
                norm = math.sqrt((dx1 * dx1 + dy1 * dy1) * (dx2 * dx2 + dy2 * dy2))
                out[n_out, 0] = u
                out[n_out, 1] = v
                out[n_out, 2] = x
                out[n_out, 3] = y
                out[n_out, 4] = abs(den) / norm
                n_out += 1
    return out[:n_out]

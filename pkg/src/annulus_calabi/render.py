"""
Static renderings: Graphviz DOT and SVG for Reeb trees, SVG phase portraits.

Output is plain text built from fixed-precision numbers, so identical inputs
give byte-identical files.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .reeb import ReebTree

WIDTH = 480
HEIGHT = 480
MARGIN = 40


def _num(x: float) -> str:
    return f"{x:.2f}"


def tree_dot(t: ReebTree) -> str:
    """Graphviz digraph, edges oriented upward in level."""
    lines = ["digraph reeb {", "  rankdir=BT;", "  node [shape=circle, fontsize=10];"]
    roots = {t.bottom_root: "bottom", t.top_root: "top"}
    for i in range(t.n_nodes):
        tag = roots.get(i)
        label = f"{i}\\n{t.levels[i]:.4g}" + (f"\\n{tag}" if tag else "")
        lines.append(f'  n{i} [label="{label}"];')
    total = t.total_measure or 1.0
    for e in range(t.n_edges):
        lo, hi = int(t.edge_lo[e]), int(t.edge_hi[e])
        m = float(t.edge_measure[e])
        pen = 1.0 + 8.0 * m / total
        lines.append(f'  n{lo} -> n{hi} [label="{m:.4g}", penwidth={pen:.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _tree_layout(t: ReebTree) -> np.ndarray:
    """Horizontal positions in [0, 1]: leaves spread in DFS order, parents centred."""
    n = t.n_nodes
    if n == 0:
        return np.zeros(0)
    adj = t.adjacency()
    root = t.bottom_root if t.bottom_root is not None else int(np.argmin(t.levels))
    x = np.zeros(n)
    order, parent = [], {root: -1}
    stack = [root]
    while stack:
        u = stack.pop()
        order.append(u)
        for v, _ in sorted(adj[u], reverse=True):
            if v not in parent:
                parent[v] = u
                stack.append(v)
    children = {u: [v for v, _ in adj[u] if parent.get(v) == u] for u in order}
    leaves = [u for u in order if not children[u]]
    for k, u in enumerate(leaves):
        x[u] = (k + 0.5) / len(leaves)
    for u in reversed(order):
        if children[u]:
            x[u] = float(np.mean([x[v] for v in children[u]]))
    return x


def tree_svg(t: ReebTree) -> str:
    """Levels on the vertical axis, edge stroke width proportional to edge measure."""
    x = _tree_layout(t)
    lv = t.levels
    lo, hi = (float(lv.min()), float(lv.max())) if t.n_nodes else (0.0, 1.0)
    span = hi - lo or 1.0
    w, h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(i):
        return MARGIN + w * x[i], MARGIN + h * (1.0 - (lv[i] - lo) / span)

    total = t.total_measure or 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    for e in range(t.n_edges):
        (x0, y0), (x1, y1) = px(int(t.edge_lo[e])), px(int(t.edge_hi[e]))
        sw = 1.0 + 24.0 * float(t.edge_measure[e]) / total
        out.append(f'<line x1="{_num(x0)}" y1="{_num(y0)}" x2="{_num(x1)}" y2="{_num(y1)}" '
                   f'stroke="steelblue" stroke-width="{_num(sw)}" stroke-linecap="round"/>')
    for i in range(t.n_nodes):
        cx, cy = px(i)
        out.append(f'<circle cx="{_num(cx)}" cy="{_num(cy)}" r="3" fill="black"/>')
        out.append(f'<text x="{_num(cx + 5)}" y="{_num(cy - 5)}" font-size="10">'
                   f'{escape(f"{lv[i]:.3g}")}</text>')
    out.append(f'<text x="{MARGIN}" y="{HEIGHT - 10}" font-size="11">level {lo:.3g} .. {hi:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def portrait_svg(trajectories: list[np.ndarray]) -> str:
    """Orbits drawn in the unit square (theta horizontal, s vertical).

    Each trajectory is an array of rows (time, lifted theta, s); polylines are
    broken where theta wraps around the seam.
    """
    w, h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}" fill="none" stroke="gray"/>']
    for tr in trajectories:
        th = np.mod(tr[:, 1], 1.0)
        s = tr[:, 2]
        breaks = np.flatnonzero(np.abs(np.diff(th)) > 0.5) + 1
        for part in np.split(np.arange(len(th)), breaks):
            if len(part) < 2:
                continue
            pts = " ".join(f"{_num(MARGIN + w * th[k])},{_num(MARGIN + h * (1.0 - s[k]))}" for k in part)
            out.append(f'<polyline points="{pts}" fill="none" stroke="darkred" stroke-width="1"/>')
    out.append(f'<text x="{MARGIN}" y="{HEIGHT - 10}" font-size="11">theta horizontal, s vertical</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

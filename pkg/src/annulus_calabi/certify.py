"""
Executable form of the non-autonomy argument for g_{T,tau} = f_T o phi_tau.

Two parameter families of r_{a,b} see the same percentile h' in [0.2, 0.8]
but take values h'T and h'T + tau on g.  An autonomous generator H would
have to reproduce both through its own percentile values, so either H has
a percentile there (and one of the series is violated), or a branch of
measure >= 0.6 hides the whole interval, and then the flow of H does not
rotate that branch while g rotates the plateau disk T times.

Only given candidates can be refuted; CONSISTENT-SO-FAR means no conflict
was found, not that an autonomous generator exists.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .calabi import C_PERCENTILE, QmParams, grid_tolerance, r_ab_autonomous
from .field import AnnulusGrid, ScalarField, linear_s, plateau_bump
from .flow import (DEFAULT_STEP, FlowMap, commutation_error, make_g, rotation_number,
                   sample_points, torus_distance)
from .reeb import DEFAULT_GAP_TOL, branch_vertices, build_reeb_tree, find_percentile, percentile_gaps

INCONSISTENT = "INCONSISTENT"
CONSISTENT = "CONSISTENT-SO-FAR"
INVALID = "INVALID-INPUT"

H_A = tuple([0.01] + [round(0.05 * k, 2) for k in range(1, 20)] + [0.99])
H_B = tuple(round(0.2 + 0.1 * k, 1) for k in range(7))
BRANCH_MIN = 0.6


@dataclass(frozen=True)
class Tolerances:
    gap_tol: float = DEFAULT_GAP_TOL
    rotation_tol: float = 1e-2
    rotation_iter: int = 16
    rotation_points: int = 4
    defect_r: float = 0.0           # declared defect of r_{a,b} (curve-level use)
    defect_rho: float = 0.0         # declared defect of the rotation quasimorphism
    branch_min: float = BRANCH_MIN
    integrator_step: float = DEFAULT_STEP

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Certificate:
    T: int
    tau: int
    series_A: list
    series_B: list
    candidate_result: list = dc_field(default_factory=list)
    gap_found: dict | None = None
    rotation_expected: float | None = None
    rotation_candidate: float | None = None
    verdict: str = CONSISTENT
    routes: list = dc_field(default_factory=list)
    conflicts: list = dc_field(default_factory=list)
    notes: list = dc_field(default_factory=list)

    @property
    def route(self) -> str | None:
        return self.routes[0] if self.routes else None

    def to_dict(self) -> dict:
        return {
            "T": self.T, "tau": self.tau, "verdict": self.verdict, "routes": list(self.routes),
            "series_A": self.series_A, "series_B": self.series_B,
            "candidate_result": self.candidate_result, "gap_found": self.gap_found,
            "rotation_expected": self.rotation_expected, "rotation_candidate": self.rotation_candidate,
            "conflicts": self.conflicts, "notes": self.notes,
        }


def params_A(h: float) -> QmParams:
    return QmParams(1.0, 2.0 * h)


def params_B(h: float) -> QmParams:
    return QmParams(0.8 - h, h - 0.2)


def expected_series(T: int, tau: int, h_a=H_A, h_b=H_B) -> tuple[list, list]:
    """Values r_{a,b}(g_{T,tau}) forced by the two parameter families."""
    if T < 0 or tau < 0:
        raise ValueError("T and tau must be nonnegative")
    a = [{"h": h, **_ab(params_A(h)), "value": h * T} for h in h_a]
    b = [{"h": h, **_ab(params_B(h)), "value": h * T + tau} for h in h_b]
    return a, b


def _ab(p: QmParams) -> dict:
    return {"a": p.a, "b": p.b}


def _invalid(T, tau, reason) -> Certificate:
    a, b = expected_series(max(T, 0), max(tau, 0))
    return Certificate(T, tau, a, b, verdict=INVALID, notes=[reason])


def _branch_points(H: ScalarField, tree, node, k: int) -> np.ndarray:
    """Up to k cell centres deep inside the branch preimage, spread deterministically."""
    g = H.grid
    verts = branch_vertices(tree, node)
    verts = verts[verts < g.n_cells]
    mask = np.zeros(g.n_cells, dtype=bool)
    mask[verts] = True
    mask = mask.reshape(g.shape)
    # keep cells whose whole 7x7 neighbourhood lies in the branch
    inner = mask.copy()
    for di in range(-3, 4):
        for dj in range(-3, 4):
            sh = np.roll(mask, di, axis=0)
            if dj > 0:
                sh = np.concatenate([np.zeros((g.n_theta, dj), bool), sh[:, :-dj]], axis=1)
            elif dj < 0:
                sh = np.concatenate([sh[:, -dj:], np.zeros((g.n_theta, -dj), bool)], axis=1)
            inner &= sh
    cells = np.argwhere(inner if inner.any() else mask)
    if len(cells) == 0:
        return np.zeros((0, 2))
    pick = cells[np.linspace(0, len(cells) - 1, min(k, len(cells))).round().astype(int)]
    return np.column_stack([(pick[:, 0] + 0.5) / g.n_theta, (pick[:, 1] + 0.5) / g.n_s])


def check_candidate(H: ScalarField, T: int, tau: int, tol: Tolerances = Tolerances(),
                    grid: AnnulusGrid | None = None) -> Certificate:
    """Test whether H could generate g_{T,tau}; see the module docstring."""
    if H.on_sphere:
        return _invalid(T, tau, "candidate lives on a sphere, not on the annulus")
    if grid is not None and H.grid != grid:
        return _invalid(T, tau, f"candidate grid {H.grid.shape} does not match {grid.shape}")
    if H.caps != (0.0, 0.0):
        return _invalid(T, tau, "candidate is not compactly supported (nonzero boundary value)")
    if T < 0 or tau < 0:
        return _invalid(T, tau, "T and tau must be nonnegative")
    sa, sb = expected_series(T, tau)
    cert = Certificate(T, tau, sa, sb, rotation_expected=float(T))

    tree = build_reeb_tree(H)
    amb = grid_tolerance(H, C_PERCENTILE) + tol.defect_r
    exp_a = {e["h"]: e["value"] for e in sa}
    exp_b = {e["h"]: e["value"] for e in sb}
    for h in sorted(set(exp_a) | set(exp_b)):
        pt = find_percentile(tree, h, tol.gap_tol)
        row = {"h": h, "value": None if pt is None else pt.level,
               "expected_A": exp_a.get(h), "expected_B": exp_b.get(h), "ambiguity": amb}
        cert.candidate_result.append(row)
        if pt is None:
            continue
        misses = [abs(pt.level - e) - amb for e in (exp_a.get(h), exp_b.get(h)) if e is not None]
        row["miss"] = max(misses)
        if exp_a.get(h) is not None and exp_b.get(h) is not None:
            # both families share percentile h: no single value matches both
            margin = abs(exp_b[h] - exp_a[h]) - 2.0 * amb
            if margin > 0:
                cert.conflicts.append({"route": "series", "h": h, "value": pt.level,
                                       "series_gap": exp_b[h] - exp_a[h], "margin": margin})
        elif row["miss"] > 0:
            cert.notes.append(f"percentile value {pt.level:.6g} at h={h} misses series A by {row['miss']:.3g}")
    if cert.conflicts:
        cert.routes.append("series")

    gaps = percentile_gaps(tree, tol.gap_tol)
    cert.gap_found = gaps.to_dict()
    total = tree.total_measure
    big = [b for b in gaps.branches if b.measure / total >= tol.branch_min - tol.gap_tol]
    if big and T > 0:
        b = max(big, key=lambda x: x.measure)
        pts = _branch_points(H, tree, b.node, tol.rotation_points)
        if len(pts):
            m = FlowMap.time_map(H, 1.0, tol.integrator_step)
            rots = [rotation_number(m, p, tol.rotation_iter, tol.rotation_tol).value for p in pts]
            rot = float(np.mean(rots))
            cert.rotation_candidate = rot
            margin = abs(T - rot) - tol.rotation_tol - tol.defect_rho
            if margin > 0:
                cert.conflicts.append({"route": "rotation", "branch_measure": b.measure / total,
                                       "attached_at_h": b.h, "rotation": rot, "expected": T,
                                       "margin": margin, "points": pts.tolist()})
                cert.routes.append("rotation")
    if cert.routes:
        cert.verdict = INCONSISTENT
    if tau == 0:
        cert.notes.append("tau = 0: both series coincide, the certificate is vacuous")
    return cert


def naive_candidate(T: int, grid: AnnulusGrid) -> ScalarField:
    """H = T * linear_s: reproduces series A but not series B."""
    return linear_s(grid, T)


def branch_candidate(T: int, grid: AnnulusGrid, attach_h: float = 0.15, measure: float = 0.7) -> ScalarField:
    """T * (linear_s with a valley branch wide enough to hide [0.2, 0.8])."""
    from .field import FieldSpec, materialize
    return materialize(FieldSpec("valley_branch", {"attach_h": attach_h, "measure": measure, "scale": T}), grid)


def reproduce_paper_ledger(T: int, tau: int, grid: AnnulusGrid | None = None,
                           n_commute_points: int = 64, seed: int = 0,
                           step: float = DEFAULT_STEP) -> dict:
    """End-to-end chain: legs, both parameter families, commuting sum, conflicts."""
    if T < 0 or tau < 0:
        raise ValueError("T and tau must be nonnegative")
    grid = grid or AnnulusGrid(256, 256)
    F = linear_s(grid, T)
    Phi = plateau_bump(grid, scale=tau) if tau else linear_s(grid, 0.0)
    g = make_g(T, tau, grid, step)
    pts = sample_points(n_commute_points, seed)
    f_map = FlowMap(((linear_s(grid), T),), step)
    phi_map = FlowMap(((plateau_bump(grid), tau),), step)
    comm = commutation_error(f_map, phi_map, pts)

    def row(h, p):
        rf = r_ab_autonomous(F, p)
        rp = r_ab_autonomous(Phi, p)
        tot = rf.combine_commuting(rp)
        return {"h": h, "a": p.a, "b": p.b, "r_f": rf.value, "r_phi": rp.value,
                "r_g": tot.value, "ambiguity": tot.ambiguity}

    table_a = [row(h, params_A(h)) for h in H_A]
    table_b = [row(h, params_B(h)) for h in H_B]
    by_h = {r["h"]: r for r in table_a}
    conflicts = []
    for r in table_b:
        ra = by_h[r["h"]]
        gap = r["r_g"] - ra["r_g"]
        conflicts.append({"h": r["h"], "r_A": ra["r_g"], "r_B": r["r_g"], "margin": gap,
                          "certified": abs(gap) - ra["ambiguity"] - r["ambiguity"] > 0})
    # g rotates points of the plateau disk inside the linear zone T times
    d_pt = (0.5, 0.5)
    rot = rotation_number(g, d_pt, 8).value
    report = {
        "T": T, "tau": tau, "grid": grid.to_dict(),
        "commutation_error": comm, "commutation_points": n_commute_points,
        "series_A": table_a, "series_B": table_b, "conflicts": conflicts,
        "gap_requirement": {"h_interval": [0.2, 0.8], "branch_measure_at_least": 0.6},
        "rotation": {"point": list(d_pt), "g_rotation": rot, "autonomous_branch_rotation": 0.0,
                     "conflict": abs(rot) > 1e-2},
        "conflict_found": any(c["certified"] for c in conflicts),
        "notes": [],
    }
    if tau == 0:
        report["notes"].append("tau = 0: no conflict, the certificate is vacuous")
    return report


def perturbed(H: ScalarField, amplitude: float, seed: int = 0) -> ScalarField:
    """H plus uniform noise in [-amplitude, amplitude] on every cell."""
    rng = np.random.default_rng(seed)
    return ScalarField(H.grid, H.samples + rng.uniform(-amplitude, amplitude, H.grid.shape), H.caps, H.gluing)

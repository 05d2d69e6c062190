"""
Command-line entry point: ``annulus-calabi <subcommand> ...``.

Every subcommand writes one JSON (or CSV) artifact to --out or stdout.  JSON
is emitted with sorted keys and fixed formatting, so identical configurations
give byte-identical output.  Invalid input exits with status 1 and a one-line
diagnostic; ``certify`` additionally exits 0 when a conflict is found and 2
when the input is consistent so far.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import certify as cert_mod
from .calabi import ROUTES, QmParams, calabi_sphere_autonomous, percentile_value_curve, r_ab_autonomous
from .curves import CurveSystem, circle, complement_partition, transport, two_chords
from .field import (FIELD_KINDS, PLATEAU_AREA, SUPPORT_AREA, AnnulusGrid, FieldSpec, integral,
                    linear_s, materialize, plateau_bump, pushforward)
from .flow import (DEFAULT_STEP, ROTATION_ITER, ROTATION_TOL, FlowMap, rotation_number,
                   sample_points, trajectory)
from .reeb import DEFAULT_GAP_TOL, build_reeb_tree, find_median, percentile_gaps
from .render import portrait_svg, tree_dot, tree_svg

SUBCOMMANDS = ("field", "reeb", "calabi", "flow", "curves", "certify")
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CONSISTENT = 2
DEFAULT_GRID = 256


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    n_theta: int = DEFAULT_GRID
    n_s: int = DEFAULT_GRID
    fmt: str = "json"
    seed: int = 0
    threads: int = 1
    step: float = DEFAULT_STEP
    gap_tol: float = DEFAULT_GAP_TOL
    out: str | None = None
    dot: str | None = None
    svg: str | None = None
    options: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("out", "dot", "svg"):
            d.pop(k)
        return d


# -- serialisation -----------------------------------------------------------

def jsonable(x):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def to_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: malformed JSON ({e.msg} at line {e.lineno})") from None
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None


def _pmap(fn, items, threads: int) -> list:
    """Ordered map; results are merged in input order regardless of thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- input parsing -----------------------------------------------------------

def parse_point(text: str) -> tuple[float, float]:
    try:
        th, s = (float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"point must be 'theta,s', got {text!r}") from None
    if not (math.isfinite(th) and math.isfinite(s)) or not 0.0 < s < 1.0:
        raise InputError(f"point {text!r} must have finite theta and 0 < s < 1")
    return th, s


def _param_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_field_spec(spec: str | None, params: list[str] | None = None) -> FieldSpec:
    """``spec`` is a JSON file path or a bare field kind; ``params`` are key=value overrides."""
    if spec is None:
        raise InputError("a field is required (--spec FILE or --spec KIND)")
    if spec in FIELD_KINDS:
        d = {"kind": spec, "params": {}}
    else:
        d = _read_json(spec)
    if not isinstance(d, dict):
        raise InputError("field spec must be a JSON object")
    d = dict(d)
    d["params"] = dict(d.get("params") or {})
    for item in params or []:
        if "=" not in item:
            raise InputError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        d["params"][k] = _param_value(v)
    try:
        return FieldSpec.from_dict(d)
    except (TypeError, ValueError) as e:
        raise InputError(str(e)) from None


def load_curves(text: str, n_vertices: int) -> CurveSystem:
    """A JSON file, or one of: two_chords[:shift], circle:s0, empty."""
    name, _, arg = text.partition(":")
    try:
        if name == "two_chords":
            return two_chords(float(arg or 0.0), n_vertices)
        if name == "circle":
            return circle(float(arg or 0.5), n_vertices)
        if name == "empty":
            return CurveSystem.empty()
    except ValueError as e:
        raise InputError(f"curve {text!r}: {e}") from None
    d = _read_json(text)
    if not isinstance(d, dict):
        raise InputError(f"{text}: curve system must be a JSON object")
    try:
        return CurveSystem.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{text}: invalid curve system ({e})") from None


# -- subcommands -------------------------------------------------------------

def _grid(cfg: RunConfig) -> AnnulusGrid:
    if cfg.n_theta < 4 or cfg.n_s < 4:
        raise InputError("grid needs at least 4 cells in each direction")
    return AnnulusGrid(cfg.n_theta, cfg.n_s)


def _field(cfg: RunConfig):
    spec = load_field_spec(cfg.options.get("spec"), cfg.options.get("params"))
    try:
        return spec, materialize(spec, _grid(cfg))
    except (TypeError, KeyError) as e:
        raise InputError(f"invalid field parameters: {e}") from None


def run_field(cfg: RunConfig) -> int:
    spec, f = _field(cfg)
    if cfg.fmt == "csv":
        th, s = f.grid.centers()
        rows = zip(th.ravel(), s.ravel(), f.samples.ravel())
        _write(cfg.out, to_csv(["theta", "s", "value"], rows))
        return EXIT_OK
    report = {"config": cfg.to_dict(), "spec": spec.to_dict(), "grid": f.grid.to_dict(),
              "caps": list(f.caps), "integral": integral(f),
              "min": float(f.samples.min()), "max": float(f.samples.max())}
    if cfg.options.get("samples"):
        report["samples"] = f.samples
    _write(cfg.out, dumps(report))
    return EXIT_OK


def run_reeb(cfg: RunConfig) -> int:
    spec, f = _field(cfg)
    t = build_reeb_tree(f)
    if cfg.dot:
        _write(cfg.dot, tree_dot(t))
    if cfg.svg:
        _write(cfg.svg, tree_svg(t))
    if cfg.fmt == "csv":
        rows = [(e, int(t.edge_lo[e]), int(t.edge_hi[e]), float(t.levels[t.edge_lo[e]]),
                 float(t.levels[t.edge_hi[e]]), float(t.edge_measure[e])) for e in range(t.n_edges)]
        _write(cfg.out, to_csv(["edge", "lo", "hi", "lo_level", "hi_level", "measure"], rows))
        return EXIT_OK
    report = {"config": cfg.to_dict(), "spec": spec.to_dict(), "tree": t.to_dict(),
              "interval": t.is_interval(), "median": find_median(t).to_dict(),
              "valence": {"max": int(t.max_valence), "trivalent": bool(t.is_trivalent)}}
    if t.bottom_root is not None:
        report["gaps"] = percentile_gaps(t, cfg.gap_tol).to_dict()
    _write(cfg.out, dumps(report))
    return EXIT_OK


def run_calabi(cfg: RunConfig) -> int:
    spec, f = _field(cfg)
    o = cfg.options
    hs = o.get("curve")
    if hs:
        curve = percentile_value_curve(f, hs, cfg.gap_tol)
        if cfg.fmt == "csv":
            _write(cfg.out, to_csv(["h", "level"], [(h, "" if v is None else v) for h, v in curve]))
        else:
            _write(cfg.out, dumps({"config": cfg.to_dict(), "spec": spec.to_dict(),
                                   "curve": [{"h": h, "level": v} for h, v in curve]}))
        return EXIT_OK
    if o.get("h") is not None:
        p = QmParams.for_percentile(o["h"])
    else:
        p = QmParams(o.get("a", 1.0), o.get("b", 1.0))
    report = {"config": cfg.to_dict(), "spec": spec.to_dict(), "params": p.to_dict(),
              "cal_sphere": calabi_sphere_autonomous(pushforward(f, p.gluing)).to_dict()}
    report["r_ab"] = r_ab_autonomous(f, p, o.get("route", ROUTES[0]), cfg.gap_tol).to_dict()
    if cfg.fmt == "csv":
        r = report["r_ab"]
        _write(cfg.out, to_csv(["a", "b", "h", "route", "value", "ambiguity"],
                               [(p.a, p.b, p.h, r["route"], r["value"], r["ambiguity"])]))
    else:
        _write(cfg.out, dumps(report))
    return EXIT_OK


def _flow_map(cfg: RunConfig) -> tuple[FlowMap, dict]:
    o = cfg.options
    grid = _grid(cfg)
    if o.get("spec"):
        spec, f = _field(cfg)
        t = o.get("time", 1.0)
        return FlowMap.time_map(f, t, cfg.step), {"spec": spec.to_dict(), "time": t}
    T, tau = o.get("T", 0.0), o.get("tau", 0.0)
    legs = []
    if T:
        legs.append((linear_s(grid), T))
    if tau:
        legs.append((plateau_bump(grid, o.get("p", PLATEAU_AREA), o.get("q", SUPPORT_AREA)), tau))
    return FlowMap(tuple(legs), cfg.step), {"T": T, "tau": tau}


def run_flow(cfg: RunConfig) -> int:
    o = cfg.options
    action = o.get("action")
    m, desc = _flow_map(cfg)
    points = [parse_point(p) for p in o.get("points") or ["0.1,0.5"]]
    if action == "rotnum":
        n_iter, tol = o.get("iter", ROTATION_ITER), o.get("rot_tol", ROTATION_TOL)
        rots = _pmap(lambda p: rotation_number(m, p, n_iter, tol), points, cfg.threads)
        if cfg.fmt == "csv":
            rows = [(r.point[0], r.point[1], r.value, r.converged) for r in rots]
            _write(cfg.out, to_csv(["theta", "s", "rotation", "converged"], rows))
        else:
            _write(cfg.out, dumps({"config": cfg.to_dict(), "map": desc,
                                   "rotation": [r.to_dict() for r in rots]}))
        return EXIT_OK
    if action == "trajectory":
        if len(m.legs) != 1:
            raise InputError("trajectory follows one autonomous flow: give --spec, or only one of --T/--tau")
        leg = m.legs[0]
        n = o.get("n_samples", 100)
        if o.get("portrait"):
            points = [tuple(p) for p in sample_points(o["portrait"], cfg.seed, (0.02, 0.98))]
        trajs = _pmap(lambda p: trajectory(leg.field, leg.duration, p, n, cfg.step), points, cfg.threads)
        if cfg.svg:
            _write(cfg.svg, portrait_svg(trajs))
        if cfg.fmt == "csv":
            rows = [(k, *row) for k, tr in enumerate(trajs) for row in tr]
            _write(cfg.out, to_csv(["orbit", "time", "theta_lift", "s"], rows))
        else:
            _write(cfg.out, dumps({"config": cfg.to_dict(), "map": desc,
                                   "orbits": [{"start": list(p), "rows": tr} for p, tr in zip(points, trajs)]}))
        return EXIT_OK
    raise InputError(f"unknown flow action {action!r}")


def run_curves(cfg: RunConfig) -> int:
    o = cfg.options
    grid = _grid(cfg)
    nv = o.get("n_vertices", 65)
    l1 = load_curves(o.get("l1", "two_chords"), nv)
    l2 = load_curves(o.get("l2", "two_chords:0.25"), nv)
    report = {"config": cfg.to_dict()}
    if o.get("transport_T") is not None:
        m = FlowMap.time_map(linear_s(grid), o["transport_T"], cfg.step)
        spacing = o.get("spacing")
        l1, l2 = _pmap(lambda l: transport(l, m, spacing), [l1, l2], cfg.threads)
        report["transport"] = {"T": o["transport_T"], "vertices": [l1.n_vertices, l2.n_vertices]}
        if o.get("curves_out"):
            _write(o["curves_out"], dumps({"l1": l1.to_dict(), "l2": l2.to_dict()}))
    inv = complement_partition(l1, l2, grid)
    if cfg.fmt == "csv":
        _write(cfg.out, to_csv(["region", "area"], enumerate(inv.areas)))
    else:
        report["partition"] = inv.to_dict()
        _write(cfg.out, dumps(report))
    return EXIT_OK


def run_certify(cfg: RunConfig) -> int:
    o = cfg.options
    T, tau = o.get("T", 5), o.get("tau", 5)
    if T < 0 or tau < 0:
        raise InputError("T and tau must be nonnegative")
    grid = _grid(cfg)
    cand = o.get("candidate")
    if not cand:
        rep = cert_mod.reproduce_paper_ledger(T, tau, grid, o.get("n_commute", 64), cfg.seed, cfg.step)
        rep["config"] = cfg.to_dict()
        if cfg.fmt == "csv":
            rows = [(c["h"], c["r_A"], c["r_B"], c["margin"], c["certified"]) for c in rep["conflicts"]]
            _write(cfg.out, to_csv(["h", "r_A", "r_B", "margin", "certified"], rows))
        else:
            _write(cfg.out, dumps(rep))
        return EXIT_OK if rep["conflict_found"] else EXIT_CONSISTENT
    if cand == "naive":
        H = cert_mod.naive_candidate(T, grid)
    elif cand == "branch":
        H = cert_mod.branch_candidate(T, grid)
    else:
        spec = load_field_spec(cand, cfg.options.get("params"))
        H = materialize(spec, grid)
    if o.get("perturb"):
        H = cert_mod.perturbed(H, o["perturb"], cfg.seed)
    tol = cert_mod.Tolerances(gap_tol=cfg.gap_tol, rotation_tol=o.get("rot_tol", 1e-2),
                              rotation_iter=o.get("iter", 16), branch_min=o.get("branch_min", cert_mod.BRANCH_MIN),
                              integrator_step=cfg.step)
    c = cert_mod.check_candidate(H, T, tau, tol, grid)
    d = c.to_dict()
    d["config"] = cfg.to_dict()
    d["tolerances"] = tol.to_dict()
    if cfg.fmt == "csv":
        rows = [(r["h"], "" if r["value"] is None else r["value"], r["expected_A"] or "", r["expected_B"] or "")
                for r in c.candidate_result]
        _write(cfg.out, to_csv(["h", "value", "expected_A", "expected_B"], rows))
    else:
        _write(cfg.out, dumps(d))
    return {cert_mod.INCONSISTENT: EXIT_OK, cert_mod.CONSISTENT: EXIT_CONSISTENT}.get(c.verdict, EXIT_INVALID)


RUNNERS = {"field": run_field, "reeb": run_reeb, "calabi": run_calabi, "flow": run_flow,
           "curves": run_curves, "certify": run_certify}


def run(cfg: RunConfig) -> int:
    """Execute one subcommand; returns the process exit code."""
    if cfg.subcommand not in RUNNERS:
        raise InputError(f"unknown subcommand {cfg.subcommand!r}")
    if cfg.fmt not in ("json", "csv"):
        raise InputError(f"unknown format {cfg.fmt!r}")
    if cfg.threads < 1:
        raise InputError("--threads must be at least 1")
    if not cfg.step > 0:
        raise InputError("--step must be positive")
    return RUNNERS[cfg.subcommand](cfg)


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--n-theta", type=int, default=DEFAULT_GRID, help="grid cells around the circle")
    common.add_argument("--n-s", type=int, default=DEFAULT_GRID, help="grid cells across the annulus")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=0, help="seed for sample-point selection")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent sweeps")
    common.add_argument("--step", type=float, default=DEFAULT_STEP, help="integrator step (time units)")
    common.add_argument("--gap-tol", type=float, default=DEFAULT_GAP_TOL, help="percentile gap tolerance")

    field_args = _Parser(add_help=False)
    field_args.add_argument("--spec", help="field spec JSON file, or a field kind name")
    field_args.add_argument("--param", dest="params", action="append", default=[],
                            help="override a spec parameter, key=value (value parsed as JSON)")

    p = _Parser(prog="annulus-calabi", description="Calabi quasimorphism toolkit on the annulus.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    s = sub.add_parser("field", parents=[common, field_args], help="sample a field")
    s.add_argument("--samples", action="store_true", help="include the sample array in JSON output")

    s = sub.add_parser("reeb", parents=[common, field_args], help="Reeb tree of a field")
    s.add_argument("--dot", help="write a Graphviz rendering")
    s.add_argument("--svg", help="write an SVG rendering")

    s = sub.add_parser("calabi", parents=[common, field_args], help="r_{a,b} and percentile values")
    s.add_argument("--a", type=float, default=1.0)
    s.add_argument("--b", type=float, default=1.0)
    s.add_argument("--h", type=float, help="percentile; sets a, b on a sphere of area 2")
    s.add_argument("--route", choices=ROUTES, default=ROUTES[0])
    s.add_argument("--curve", type=float, nargs="+", help="percentile levels for a value curve")

    s = sub.add_parser("flow", parents=[common, field_args], help="rotation numbers and trajectories")
    s.add_argument("action", choices=("rotnum", "trajectory"))
    s.add_argument("--T", type=float, default=0.0, help="time of the linear shear f")
    s.add_argument("--tau", type=float, default=0.0, help="time of the plateau bump flow")
    s.add_argument("--p", type=float, default=PLATEAU_AREA, help="bump plateau area")
    s.add_argument("--q", type=float, default=SUPPORT_AREA, help="bump support area")
    s.add_argument("--time", type=float, default=1.0, help="flow time when --spec is given")
    s.add_argument("--point", dest="points", action="append", help="theta,s (repeatable)")
    s.add_argument("--iter", type=int, default=ROTATION_ITER)
    s.add_argument("--rot-tol", type=float, default=ROTATION_TOL)
    s.add_argument("--n-samples", type=int, default=100)
    s.add_argument("--portrait", type=int, help="random start points for a phase portrait")
    s.add_argument("--svg", help="write the orbits as SVG")

    s = sub.add_parser("curves", parents=[common], help="complement partition of two curve systems")
    s.add_argument("--l1", default="two_chords", help="JSON file, two_chords[:shift], circle:s0 or empty")
    s.add_argument("--l2", default="two_chords:0.25")
    s.add_argument("--n-vertices", type=int, default=65)
    s.add_argument("--transport-T", type=float, help="push both systems through f_T first")
    s.add_argument("--spacing", type=float, help="transport refinement spacing")
    s.add_argument("--curves-out", help="write the transported curve systems")

    s = sub.add_parser("certify", parents=[common], help="non-autonomy certificate for g_{T,tau}")
    s.add_argument("--T", type=int, default=5)
    s.add_argument("--tau", type=int, default=5)
    s.add_argument("--candidate", help="naive, branch, or a field spec (file or kind) to test")
    s.add_argument("--param", dest="params", action="append", default=[])
    s.add_argument("--perturb", type=float, help="add uniform noise of this amplitude to the candidate")
    s.add_argument("--branch-min", type=float, default=cert_mod.BRANCH_MIN)
    s.add_argument("--iter", type=int, default=16, help="rotation iterations for the branch check")
    s.add_argument("--rot-tol", type=float, default=1e-2)
    s.add_argument("--n-commute", type=int, default=64, help="sample points for the commutation check")
    return p


COMMON_KEYS = ("subcommand", "n_theta", "n_s", "fmt", "seed", "threads", "step", "gap_tol", "out", "dot", "svg")


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    common = {k: d.pop(k) for k in COMMON_KEYS if k in d}
    return RunConfig(**common, options={k: v for k, v in sorted(d.items()) if v is not None})


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return run(config_from_args(ns))
    except Exception as e:  # noqa: BLE001 - every failure becomes a diagnostic, never a traceback
        kind = "invalid input" if isinstance(e, (InputError, ValueError, KeyError, TypeError)) else "error"
        print(f"annulus-calabi: {kind}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())

"""
Calabi homomorphism, the sphere Calabi quasimorphism on autonomous fields and
the normalized differences r_{a,b} between them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

from .field import ScalarField, SphereGluing, integral, pushforward
from .reeb import DEFAULT_GAP_TOL, build_reeb_tree, find_median, find_percentile

QM_KINDS = ("cal_sigma", "cal_sphere", "r_ab", "rho_rotation")
ROUTES = ("median-formula", "percentile-direct")

# Constants C in the grid tolerance C * (1/n_s + 1/n_theta) * max|f|.  Tree
# levels are read off sample values, so a level is uncertain by about one
# cell of variation; the integral itself is exact on cell-constant data.
C_MEDIAN = 1.0
C_PERCENTILE = 1.0


class PercentileAbsent(ValueError):
    """The requested h falls in a gap of the stem."""


@dataclass(frozen=True)
class QmParams:
    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"gluing areas must be nonnegative, got a={self.a}, b={self.b}")

    @property
    def h(self) -> float:
        return (1.0 + self.b - self.a) / 2.0

    @property
    def sphere_area(self) -> float:
        return 1.0 + self.a + self.b

    @property
    def percentile_compatible(self) -> bool:
        return 0.0 <= self.h <= 1.0

    @property
    def gluing(self) -> SphereGluing:
        return SphereGluing(self.a, self.b)

    @classmethod
    def for_percentile(cls, h: float, area: float = 2.0) -> "QmParams":
        """Parameters with percentile h on a sphere of the given area (a + b = area - 1)."""
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"h must lie in [0, 1], got {h}")
        extra = area - 1.0
        a = (1.0 + extra) / 2.0 - h
        b = extra - a
        if a < -1e-12 or b < -1e-12:
            raise ValueError(f"no sphere of area {area} has percentile {h}")
        return cls(max(a, 0.0), max(b, 0.0))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "h": self.h}


@dataclass(frozen=True)
class QmValue:
    """A value known up to ``ambiguity`` (a declared defect or grid tolerance)."""

    value: float
    ambiguity: float = 0.0
    kind: str = "r_ab"
    route: str | None = None
    params: QmParams | None = None
    meta: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in QM_KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.ambiguity < 0:
            raise ValueError("ambiguity must be nonnegative")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.value - self.ambiguity, self.value + self.ambiguity)

    def definitely_less(self, other: "QmValue | float") -> bool:
        o = _as_qm(other, self.kind)
        return self.value + self.ambiguity < o.value - o.ambiguity

    def definitely_greater(self, other: "QmValue | float") -> bool:
        return _as_qm(other, self.kind).definitely_less(self)

    def compatible(self, other: "QmValue | float") -> bool:
        """True when the two values cannot be told apart."""
        return not (self.definitely_less(other) or self.definitely_greater(other))

    def margin(self, other: "QmValue | float") -> float:
        """|difference| minus both ambiguities; positive means a certified discrepancy."""
        o = _as_qm(other, self.kind)
        return abs(self.value - o.value) - self.ambiguity - o.ambiguity

    def combine_commuting(self, other: "QmValue", defect: float = 0.0) -> "QmValue":
        """Value on the product of two commuting maps.

        Homogeneous quasimorphisms are additive on commuting elements, so the
        only extra uncertainty is what the caller declares in ``defect``.
        """
        if other.kind != self.kind:
            raise ValueError(f"cannot combine {self.kind} with {other.kind}")
        if self.params != other.params:
            raise ValueError("cannot combine values taken at different parameters")
        return QmValue(self.value + other.value, self.ambiguity + other.ambiguity + defect,
                       self.kind, self.route if self.route == other.route else None, self.params)

    def scaled(self, m: float) -> "QmValue":
        return QmValue(m * self.value, abs(m) * self.ambiguity, self.kind, self.route, self.params)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "params": self.params.to_dict() if self.params else None,
            "value": self.value,
            "ambiguity": self.ambiguity,
            "route": self.route,
        }
        if self.meta:
            d["meta"] = dict(self.meta)
        return d


def _as_qm(x, kind) -> QmValue:
    return x if isinstance(x, QmValue) else QmValue(float(x), 0.0, kind)


def grid_tolerance(f: ScalarField, c: float) -> float:
    g = f.grid
    scale = float(max(abs(f.samples).max(initial=0.0), abs(f.caps[0]), abs(f.caps[1])))
    return c * (1.0 / g.n_s + 1.0 / g.n_theta) * scale


def calabi_homomorphism(path, dt: float) -> QmValue:
    """Time quadrature of the space integrals of a path of fields on [0, 1].

    ``len(path) * dt == 1`` means midpoint samples; ``(len(path) - 1) * dt == 1``
    means samples at both ends (trapezoid rule).
    """
    path = list(path)
    if not path:
        raise ValueError("empty path")
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = path[0].grid
    for f in path:
        if f.grid != grid:
            raise ValueError("all fields of a path must share one grid")
        if f.on_sphere:
            raise ValueError("the Calabi homomorphism is taken on the annulus")
    vals = [integral(f) for f in path]
    n = len(vals)
    if math.isclose(n * dt, 1.0, rel_tol=1e-9, abs_tol=1e-12):
        total = dt * math.fsum(vals)
        rule = "midpoint"
    elif n > 1 and math.isclose((n - 1) * dt, 1.0, rel_tol=1e-9, abs_tol=1e-12):
        total = dt * (math.fsum(vals) - 0.5 * (vals[0] + vals[-1]))
        rule = "trapezoid"
    else:
        raise ValueError(f"path of {n} samples with dt={dt} does not cover [0, 1]")
    return QmValue(total, 0.0, "cal_sigma", meta={"rule": rule})


def concatenate_paths(p1, p2, dt: float) -> tuple[list[ScalarField], float]:
    """Midpoint-sampled path of the product map: run p2 then p1, each at double speed."""
    p1, p2 = list(p1), list(p2)
    for p in (p1, p2):
        if not math.isclose(len(p) * dt, 1.0, rel_tol=1e-9):
            raise ValueError("concatenation needs midpoint-sampled paths covering [0, 1]")
    return [f.scaled(2.0) for f in p2] + [f.scaled(2.0) for f in p1], dt / 2.0


def calabi_sphere_autonomous(f: ScalarField) -> QmValue:
    """Integral minus area times the value on the median set."""
    if not f.on_sphere:
        raise ValueError("calabi_sphere_autonomous needs a field on a glued sphere")
    tree = build_reeb_tree(f)
    med = find_median(tree)
    val = integral(f) - f.total_area * med.level
    return QmValue(val, 0.0, "cal_sphere", "median-formula",
                   QmParams(f.gluing.a, f.gluing.b), meta={"median_level": med.level})


def _require_compact(f: ScalarField):
    if f.on_sphere:
        raise ValueError("r_ab is evaluated on annulus fields")
    if f.caps != (0.0, 0.0):
        raise ValueError("field is not compactly supported (nonzero boundary value)")


def r_ab_autonomous(f: ScalarField, p: QmParams, route: str = "median-formula",
                    gap_tol: float = DEFAULT_GAP_TOL) -> QmValue:
    """Normalized difference of the annulus and sphere Calabi values of f."""
    if route not in ROUTES:
        raise ValueError(f"route must be one of {ROUTES}")
    _require_compact(f)
    if route == "median-formula":
        sphere = calabi_sphere_autonomous(pushforward(f, p.gluing))
        val = (integral(f) - sphere.value) / p.sphere_area
        return QmValue(val, grid_tolerance(f, C_MEDIAN), "r_ab", route, p,
                       meta={"median_level": sphere.meta["median_level"]})
    if not p.percentile_compatible:
        raise ValueError(f"h = {p.h} outside [0, 1]")
    pt = find_percentile(build_reeb_tree(f), p.h, gap_tol)
    if pt is None:
        raise PercentileAbsent(f"no {p.h}-percentile")
    return QmValue(pt.level, grid_tolerance(f, C_PERCENTILE), "r_ab", route, p)


def percentile_value_curve(f: ScalarField, h_samples, gap_tol: float = DEFAULT_GAP_TOL) -> list:
    """(h, field value at the h-percentile or None when absent) for each h."""
    if f.on_sphere:
        raise ValueError("percentile curves are taken on annulus fields")
    hs = [float(h) for h in h_samples]
    for h in hs:
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"h must lie in [0, 1], got {h}")
    tree = build_reeb_tree(f)
    out = []
    for h in hs:
        pt = find_percentile(tree, h, gap_tol)
        out.append((h, None if pt is None else pt.level))
    return out

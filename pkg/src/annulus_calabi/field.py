"""
Sampled scalar fields on the annulus S^1 x [0, 1] and on glued spheres.

The annulus carries the standard area form dtheta ^ ds, so Area = 1 and
a regular n_theta x n_s lattice of cell-centred samples gives every cell the
same weight 1 / (n_theta * n_s).  A sphere S^2_{a,b} is modelled by adding
two pseudo-cells ("caps") of area a (glued to s = 0) and b (glued to s = 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Ramp cut-offs of the linear field F(theta, s) = s.
RAMP_LO = 0.01
RAMP_HI = 0.99

# Plateau/support areas of the bump Phi.
PLATEAU_AREA = 0.8
SUPPORT_AREA = 0.9

# Shape of the bump: a superellipse |dtheta/A|^k + |ds/B|^k <= r^k.
BUMP_HALF_WIDTH = 0.5
BUMP_HALF_HEIGHT = 0.48
BUMP_EXPONENT = 8.0

FIELD_KINDS = ("linear_s", "plateau_bump", "sum", "custom_samples", "valley_branch")


def smoothstep(x):
    """Cubic 3x^2 - 2x^3 clipped to [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True)
class AnnulusGrid:
    n_theta: int
    n_s: int

    def __post_init__(self):
        if int(self.n_theta) != self.n_theta or int(self.n_s) != self.n_s:
            raise ValueError("grid sizes must be integers")
        if self.n_theta < 3 or self.n_s < 2:
            raise ValueError(f"grid too small: {self.n_theta}x{self.n_s}")

    @property
    def cell_area(self) -> float:
        return 1.0 / (self.n_theta * self.n_s)

    @property
    def n_cells(self) -> int:
        return self.n_theta * self.n_s

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_s)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates, each of shape (n_theta, n_s)."""
        th = (np.arange(self.n_theta) + 0.5) / self.n_theta
        s = (np.arange(self.n_s) + 0.5) / self.n_s
        return np.meshgrid(th, s, indexing="ij")

    def cell_of(self, theta: float, s: float) -> tuple[int, int]:
        i = int(math.floor((theta % 1.0) * self.n_theta)) % self.n_theta
        j = min(max(int(math.floor(s * self.n_s)), 0), self.n_s - 1)
        return i, j

    def to_dict(self) -> dict:
        return {"n_theta": self.n_theta, "n_s": self.n_s}


@dataclass(frozen=True)
class SphereGluing:
    """Caps of area a (at s = 0) and b (at s = 1) turning the annulus into S^2_{a,b}."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"cap areas must be nonnegative, got a={self.a}, b={self.b}")

    @property
    def area(self) -> float:
        return 1.0 + self.a + self.b

    @property
    def h(self) -> float:
        return (1.0 + self.b - self.a) / 2.0

    @property
    def percentile_compatible(self) -> bool:
        return 0.0 <= self.h <= 1.0

    @classmethod
    def for_percentile(cls, h: float) -> "SphereGluing":
        """The gluing (a, b) = (1, 2h)."""
        return cls(1.0, 2.0 * h)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell samples plus the constant values carried by the two caps.

    On a bare annulus the caps have zero area and hold the boundary limits
    of the field; they become the roots of the Reeb tree.
    """

    grid: AnnulusGrid
    samples: np.ndarray
    caps: tuple[float, float] = (0.0, 0.0)
    gluing: SphereGluing | None = None

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.shape != self.grid.shape:
            raise ValueError(f"samples shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "caps", (float(self.caps[0]), float(self.caps[1])))

    @property
    def on_sphere(self) -> bool:
        return self.gluing is not None

    @property
    def cap_areas(self) -> tuple[float, float]:
        if self.gluing is None:
            return (0.0, 0.0)
        return (self.gluing.a, self.gluing.b)

    @property
    def total_area(self) -> float:
        a, b = self.cap_areas
        return 1.0 + a + b

    @property
    def support_flag(self) -> np.ndarray:
        return self.samples != 0.0

    def scaled(self, m: float) -> "ScalarField":
        return ScalarField(self.grid, m * self.samples, (m * self.caps[0], m * self.caps[1]), self.gluing)

    def plus(self, other: "ScalarField") -> "ScalarField":
        if other.grid != self.grid or other.gluing != self.gluing:
            raise ValueError("fields live on different domains")
        caps = (self.caps[0] + other.caps[0], self.caps[1] + other.caps[1])
        return ScalarField(self.grid, self.samples + other.samples, caps, self.gluing)

    def value_at(self, theta: float, s: float) -> float:
        """Sample of the cell containing (theta, s)."""
        i, j = self.grid.cell_of(theta, s)
        return float(self.samples[i, j])

    def same_as(self, other: "ScalarField") -> bool:
        return (
            self.grid == other.grid
            and self.gluing == other.gluing
            and self.caps == other.caps
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {FIELD_KINDS}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": _params_to_json(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        if not isinstance(d, dict) or "kind" not in d:
            raise ValueError("field spec must be an object with a 'kind' entry")
        params = dict(d.get("params", {}))
        if d["kind"] == "sum":
            params["terms"] = [cls.from_dict(t) if isinstance(t, dict) else t for t in params.get("terms", [])]
        return cls(d["kind"], params)


def _params_to_json(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, FieldSpec):
            out[k] = v.to_dict()
        elif isinstance(v, (list, tuple)):
            out[k] = [x.to_dict() if isinstance(x, FieldSpec) else x for x in v]
        elif isinstance(v, np.ndarray):
            out[k] = v.tolist()
        else:
            out[k] = v
    return out


# -- closed-form profiles ----------------------------------------------------

def linear_s_profile(s, lo: float = RAMP_LO, hi: float = RAMP_HI):
    """s on [lo, hi]; smoothstep up from 0 on [0, lo]; flat then down to 0 on [hi, 1]."""
    s = np.asarray(s, dtype=float)
    mid = hi + (1.0 - hi) / 2.0
    bottom = lo * smoothstep(s / lo)
    top = hi * (1.0 - smoothstep((s - mid) / (1.0 - mid)))
    return np.where(s < lo, bottom, np.where(s <= hi, s, top))


def superellipse_area(half_width: float, half_height: float, exponent: float) -> float:
    """Area of {|x/A|^k + |y/B|^k <= 1}."""
    k = exponent
    return 4.0 * half_width * half_height * math.gamma(1.0 + 1.0 / k) ** 2 / math.gamma(1.0 + 2.0 / k)


def bump_radii(p: float, q: float, half_width: float = BUMP_HALF_WIDTH,
               half_height: float = BUMP_HALF_HEIGHT, exponent: float = BUMP_EXPONENT) -> tuple[float, float]:
    """Radii (in the superellipse norm) enclosing areas p and q."""
    unit = superellipse_area(half_width, half_height, exponent)
    return math.sqrt(p / unit), math.sqrt(q / unit)


def superellipse_norm(theta, s, center_theta, center_s, half_width, half_height, exponent):
    dth = (np.asarray(theta, dtype=float) - center_theta + 0.5) % 1.0 - 0.5
    ds = np.asarray(s, dtype=float) - center_s
    k = exponent
    return (np.abs(dth / half_width) ** k + np.abs(ds / half_height) ** k) ** (1.0 / k)


def plateau_bump_profile(theta, s, p: float = PLATEAU_AREA, q: float = SUPPORT_AREA, *,
                         center_theta: float = 0.5, center_s: float = 0.5,
                         half_width: float = BUMP_HALF_WIDTH, half_height: float = BUMP_HALF_HEIGHT,
                         exponent: float = BUMP_EXPONENT, radii: tuple[float, float] | None = None):
    r_p, r_q = radii if radii is not None else bump_radii(p, q, half_width, half_height, exponent)
    rho = superellipse_norm(theta, s, center_theta, center_s, half_width, half_height, exponent)
    return smoothstep((r_q - rho) / (r_q - r_p))


def grid_radii(rho: np.ndarray, p: float, q: float) -> tuple[float, float]:
    """Radii whose cell counts give plateau area >= p and support area <= q exactly on this grid."""
    r = np.sort(rho.ravel())
    n = r.size
    k_p = int(math.ceil(p * n - 1e-9))
    k_q = int(math.floor(q * n + 1e-9))
    if k_p < 1 or k_q >= n or r[k_p - 1] >= r[k_q]:
        raise ValueError(f"grid of {n} cells is too coarse to separate bump areas {p} and {q}")
    return float(r[k_p - 1]), float(r[k_q])


def _check_bump(params: dict) -> dict:
    p = float(params.get("p", PLATEAU_AREA))
    q = float(params.get("q", SUPPORT_AREA))
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ValueError(f"bump areas must lie in (0, 1), got p={p}, q={q}")
    if p >= q:
        raise ValueError(f"plateau area {p} must be smaller than support area {q}")
    geo = {
        "center_theta": float(params.get("center_theta", 0.5)),
        "center_s": float(params.get("center_s", 0.5)),
        "half_width": float(params.get("half_width", BUMP_HALF_WIDTH)),
        "half_height": float(params.get("half_height", BUMP_HALF_HEIGHT)),
        "exponent": float(params.get("exponent", BUMP_EXPONENT)),
    }
    _, r_q = bump_radii(p, q, geo["half_width"], geo["half_height"], geo["exponent"])
    if geo["half_width"] * r_q >= 0.5:
        raise ValueError("bump support wraps around the annulus; it would not be a disk")
    lo = geo["center_s"] - geo["half_height"] * r_q
    hi = geo["center_s"] + geo["half_height"] * r_q
    if lo <= 0.0 or hi >= 1.0:
        raise ValueError(f"bump support s-range [{lo:.4f}, {hi:.4f}] leaves the annulus")
    return {"p": p, "q": q, **geo}


def valley_branch_profile(theta, s, attach_h: float = 0.2, measure: float = 0.6, *,
                          depth: float = 0.15, theta_width: float = 0.9, ramp: float = 0.005):
    """linear_s with a rectangular valley of the given area hanging off level attach_h.

    The valley occupies theta in [0.5 - w/2, 0.5 + w/2], s in [attach_h, attach_h + measure / w].
    Within ``ramp`` of its rim the field blends from s down to a flat floor at
    attach_h - depth, so the valley is a basin whose lowest rim point sits at
    level attach_h: a branch of the Reeb tree growing out of the stem there.
    """
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(s, dtype=float)
    height = measure / theta_width
    dth = np.abs((theta - 0.5 + 0.5) % 1.0 - 0.5)
    inside = (dth <= theta_width / 2.0) & (s >= attach_h) & (s <= attach_h + height)
    dist = np.minimum(np.minimum(theta_width / 2.0 - dth, s - attach_h), attach_h + height - s)
    w = smoothstep(dist / ramp)
    valley = (1.0 - w) * s + w * (attach_h - depth)
    return np.where(inside, valley, linear_s_profile(s))


def _check_valley(params: dict) -> dict:
    out = {
        "attach_h": float(params.get("attach_h", 0.2)),
        "measure": float(params.get("measure", 0.6)),
        "depth": float(params.get("depth", 0.15)),
        "theta_width": float(params.get("theta_width", 0.9)),
        "ramp": float(params.get("ramp", 0.005)),
    }
    if not 0.0 < out["theta_width"] < 1.0:
        raise ValueError("valley theta_width must lie in (0, 1)")
    top = out["attach_h"] + out["measure"] / out["theta_width"]
    if out["attach_h"] <= RAMP_LO or top >= RAMP_HI:
        raise ValueError(f"valley s-range [{out['attach_h']}, {top:.4f}] must stay inside [{RAMP_LO}, {RAMP_HI}]")
    if out["depth"] <= 0.0 or out["ramp"] <= 0.0:
        raise ValueError("valley depth and ramp must be positive")
    return out


# -- operations ----------------------------------------------------------------

def materialize(spec: FieldSpec, grid: AnnulusGrid) -> ScalarField:
    """Sample a field description on the grid.  Deterministic."""
    params = dict(spec.params)
    scale = float(params.pop("scale", 1.0))
    th, s = grid.centers()
    caps = (0.0, 0.0)
    if spec.kind == "linear_s":
        lo = float(params.get("lo", RAMP_LO))
        hi = float(params.get("hi", RAMP_HI))
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"linear_s cut-offs must satisfy 0 < lo < hi < 1, got {lo}, {hi}")
        vals = linear_s_profile(s, lo, hi)
    elif spec.kind == "plateau_bump":
        bp = _check_bump(params)
        p, q = bp.pop("p"), bp.pop("q")
        rho = superellipse_norm(th, s, bp["center_theta"], bp["center_s"], bp["half_width"],
                                bp["half_height"], bp["exponent"])
        vals = plateau_bump_profile(th, s, p, q, radii=grid_radii(rho, p, q), **bp)
    elif spec.kind == "valley_branch":
        vp = _check_valley(params)
        vals = valley_branch_profile(th, s, vp.pop("attach_h"), vp.pop("measure"), **vp)
    elif spec.kind == "sum":
        terms = params.get("terms", [])
        weights = params.get("weights", [1.0] * len(terms))
        if len(weights) != len(terms):
            raise ValueError("sum: weights and terms differ in length")
        vals = np.zeros(grid.shape)
        c0 = c1 = 0.0
        for w, t in zip(weights, terms):
            t = t if isinstance(t, FieldSpec) else FieldSpec.from_dict(t)
            sub = materialize(t, grid)
            vals = vals + float(w) * sub.samples
            c0 += float(w) * sub.caps[0]
            c1 += float(w) * sub.caps[1]
        caps = (c0, c1)
    elif spec.kind == "custom_samples":
        vals = np.array(params.get("samples"), dtype=float)
        if vals.ndim == 1 and vals.size == grid.n_cells:
            vals = vals.reshape(grid.shape)
        if vals.shape != grid.shape:
            raise ValueError(f"custom_samples shape {vals.shape} does not match grid {grid.shape}")
        caps = tuple(float(c) for c in params.get("caps", (0.0, 0.0)))
    else:  # pragma: no cover - guarded by FieldSpec
        raise ValueError(spec.kind)
    return ScalarField(grid, scale * np.asarray(vals, dtype=float), (scale * caps[0], scale * caps[1]))


def linear_s(grid: AnnulusGrid, scale: float = 1.0) -> ScalarField:
    return materialize(FieldSpec("linear_s", {"scale": scale}), grid)


def plateau_bump(grid: AnnulusGrid, p: float = PLATEAU_AREA, q: float = SUPPORT_AREA,
                 scale: float = 1.0, **geometry) -> ScalarField:
    return materialize(FieldSpec("plateau_bump", {"p": p, "q": q, "scale": scale, **geometry}), grid)


def zero_field(grid: AnnulusGrid) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape))


def integral(f: ScalarField) -> float:
    """Area-weighted sum of the samples, caps included."""
    a, b = f.cap_areas
    return float(np.sum(f.samples, dtype=np.float64) * f.grid.cell_area + a * f.caps[0] + b * f.caps[1])


def pushforward(f: ScalarField, g: SphereGluing) -> ScalarField:
    """Extend f by zero over the caps of S^2_{a,b}."""
    if f.on_sphere:
        raise ValueError("field already lives on a sphere")
    if f.caps != (0.0, 0.0):
        raise ValueError(f"field has nonzero boundary values {f.caps}; it is not compactly supported")
    return ScalarField(f.grid, f.samples, (0.0, 0.0), g)


def superlevel_area(f: ScalarField, c: float) -> float:
    a, b = f.cap_areas
    area = np.count_nonzero(f.samples >= c) * f.grid.cell_area
    area += a * (f.caps[0] >= c) + b * (f.caps[1] >= c)
    return float(area)


def wraps_theta(mask: np.ndarray) -> bool:
    """True when the cells in ``mask`` contain a loop going once around the S^1 direction.

    Cells are 8-connected and theta wraps.  Each cell gets an integer lift
    (number of times the seam was crossed); a component wraps iff some edge
    joins two of its cells with inconsistent lifts.
    """
    mask = np.asarray(mask, dtype=bool)
    n_theta, n_s = mask.shape
    lift = np.full(mask.shape, np.iinfo(np.int64).min, dtype=np.int64)
    for i0, j0 in zip(*np.nonzero(mask)):
        if lift[i0, j0] != np.iinfo(np.int64).min:
            continue
        lift[i0, j0] = 0
        stack = [(i0, j0)]
        while stack:
            i, j = stack.pop()
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    jj = j + dj
                    if jj < 0 or jj >= n_s:
                        continue
                    ii = i + di
                    crossing = (ii < 0) * -1 + (ii >= n_theta) * 1
                    ii %= n_theta
                    if not mask[ii, jj]:
                        continue
                    want = lift[i, j] + crossing
                    if lift[ii, jj] == np.iinfo(np.int64).min:
                        lift[ii, jj] = want
                        stack.append((ii, jj))
                    elif lift[ii, jj] != want:
                        return True
    return False

"""
Hamiltonian flows on the annulus, their compositions, rotation numbers and
area distortion.

Points are (theta, s) with theta carried in the universal cover: the lift of
a trajectory is simply its final theta minus its initial theta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _integrate
from .field import AnnulusGrid, ScalarField, linear_s, plateau_bump

DEFAULT_STEP = 1e-3
# RK4 stays accurate while dt * (local rotation rate) is below about 0.035; at
# rates above STIFFNESS_SCALE the step is shrunk proportionally.
STIFFNESS_SCALE = 35.0
ROTATION_ITER = 64
ROTATION_TOL = 1e-2


@dataclass(frozen=True)
class TrajectoryPoint:
    theta: float    # in [0, 1)
    s: float
    lift: float     # total theta displacement in the universal cover
    clamped: bool = False


@dataclass(frozen=True)
class RotationNumber:
    value: float
    point: tuple[float, float]
    trajectory_length: int
    converged: bool = True
    half_value: float | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value, "point": list(self.point), "trajectory_length": self.trajectory_length,
            "converged": self.converged, "half_value": self.half_value,
        }


def stiffness(f: ScalarField) -> float:
    """Largest sqrt|det Hess F| over the grid: the fastest local rotation rate of the flow."""
    P = _integrate.padded_samples(f.samples, f.caps)
    n_theta, n_s = f.grid.n_theta, f.grid.n_s
    g = _integrate.GHOST
    c = P[g:-g, g:-g]
    ftt = (P[g + 1:P.shape[0] - g + 1, g:-g] - 2 * c + P[g - 1:-g - 1, g:-g]) * n_theta**2
    fss = (P[g:-g, g + 1:P.shape[1] - g + 1] - 2 * c + P[g:-g, g - 1:-g - 1]) * n_s**2
    dp = P[g + 1:P.shape[0] - g + 1] - P[g - 1:-g - 1]
    fts = (dp[:, g + 1:P.shape[1] - g + 1] - dp[:, g - 1:-g - 1]) * (0.25 * n_theta * n_s)
    det = ftt * fss - fts * fts
    return float(np.sqrt(np.abs(det).max()))


class _Leg:
    __slots__ = ("field", "duration", "padded", "rate")

    def __init__(self, field: ScalarField, duration: float):
        if duration < 0:
            raise ValueError("flow durations must be nonnegative")
        self.field = field
        self.duration = float(duration)
        self.padded = _integrate.padded_samples(field.samples, field.caps)
        self.rate = stiffness(field)


def steps_per_unit(rate: float, step: float) -> int:
    """RK4 steps per unit time: 1/step, refined where the field rotates fast."""
    base = 1.0 / step
    return int(math.ceil(base * max(1.0, rate / STIFFNESS_SCALE) - 1e-9))


def _n_steps(duration: float, step: float, rate: float = 0.0) -> int:
    if duration <= 0:
        return 0
    return int(math.ceil(duration * steps_per_unit(rate, step) - 1e-9))


def _advance(leg: _Leg, pts: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    n = _n_steps(leg.duration, step, leg.rate)
    if n == 0:
        return pts.copy(), np.zeros(len(pts), dtype=bool)
    return _integrate.flow_points(leg.padded, np.ascontiguousarray(pts, dtype=float), leg.duration / n, n)


class FlowMap:
    """Composition of autonomous time-t maps.

    ``legs`` are written as in the composition f_1 o f_2 o ... o f_k, so the
    last leg acts first.
    """

    def __init__(self, legs=(), integrator_step: float = DEFAULT_STEP):
        if integrator_step <= 0:
            raise ValueError("integrator step must be positive")
        self.legs = tuple(leg if isinstance(leg, _Leg) else _Leg(*leg) for leg in legs)
        self.integrator_step = float(integrator_step)

    @classmethod
    def identity(cls, integrator_step: float = DEFAULT_STEP) -> "FlowMap":
        return cls((), integrator_step)

    @classmethod
    def time_map(cls, f: ScalarField, t: float, integrator_step: float = DEFAULT_STEP) -> "FlowMap":
        return cls(((f, t),), integrator_step)

    def compose(self, other: "FlowMap") -> "FlowMap":
        """self o other."""
        return FlowMap(self.legs + other.legs, self.integrator_step)

    def power(self, n: int) -> "FlowMap":
        if n < 0:
            raise ValueError("negative powers are not supported")
        return FlowMap(self.legs * n, self.integrator_step)

    def inverse(self) -> "FlowMap":
        """Same legs reversed, each run with the negated field."""
        return FlowMap(tuple((leg.field.scaled(-1.0), leg.duration) for leg in reversed(self.legs)),
                       self.integrator_step)

    def apply(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Map (N, 2) points with lifted theta; returns images (lifted) and clamp flags."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        flags = np.zeros(len(pts), dtype=bool)
        for leg in reversed(self.legs):
            pts, fl = _advance(leg, pts, self.integrator_step)
            flags |= fl
        return pts, flags

    def tangent(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Images and the derivative of the discrete map, as (N, 4) row-major 2x2 matrices."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        J = np.tile(np.array([1.0, 0.0, 0.0, 1.0]), (len(pts), 1))
        for leg in reversed(self.legs):
            n = _n_steps(leg.duration, self.integrator_step, leg.rate)
            if n:
                pts, J = _integrate.flow_tangent(leg.padded, np.ascontiguousarray(pts), J, leg.duration / n, n)
        return pts, J

    def __call__(self, pts) -> np.ndarray:
        return self.apply(pts)[0]


def hamiltonian_vector_field(f: ScalarField, pt) -> tuple[float, float]:
    theta, s = float(pt[0]), float(pt[1])
    if not 0.0 < s < 1.0:
        raise ValueError(f"point {pt} is on or outside the annulus boundary")
    v = _integrate.velocities(_integrate.padded_samples(f.samples, f.caps), np.array([[theta % 1.0, s]]))
    return float(v[0, 0]), float(v[0, 1])


def integrate(f: ScalarField, t: float, pt, step: float = DEFAULT_STEP) -> TrajectoryPoint:
    if t < 0:
        raise ValueError("integration time must be nonnegative")
    theta0, s0 = float(pt[0]), float(pt[1])
    out, flags = FlowMap.time_map(f, t, step).apply([[theta0, s0]])
    th, s = out[0]
    return TrajectoryPoint(theta=float(th % 1.0), s=float(s), lift=float(th - theta0), clamped=bool(flags[0]))


def trajectory(f: ScalarField, t: float, pt, n_samples: int = 100, step: float = DEFAULT_STEP) -> np.ndarray:
    """Rows (time, lifted theta, s) at n_samples + 1 equally spaced times."""
    leg = _Leg(f, t / n_samples if n_samples else 0.0)
    rows = [(0.0, float(pt[0]), float(pt[1]))]
    cur = np.array([[float(pt[0]), float(pt[1])]])
    for k in range(1, n_samples + 1):
        cur, _ = _advance(leg, cur, step)
        rows.append((k * t / n_samples, float(cur[0, 0]), float(cur[0, 1])))
    return np.array(rows)


def make_f(T: float, grid: AnnulusGrid, step: float = DEFAULT_STEP) -> FlowMap:
    """Time-T map of the linear field F = s."""
    return FlowMap.time_map(linear_s(grid), T, step)


def make_phi(tau: float, grid: AnnulusGrid, step: float = DEFAULT_STEP, p: float = 0.8, q: float = 0.9) -> FlowMap:
    """Time-tau map of the plateau bump Phi."""
    return FlowMap.time_map(plateau_bump(grid, p, q), tau, step)


def make_g(T: int, tau: int, grid: AnnulusGrid, step: float = DEFAULT_STEP) -> FlowMap:
    """g = f_T o phi_tau.  Integer T makes f_T the identity on the linear zone."""
    if int(T) != T or int(tau) != tau or T < 0 or tau < 0:
        raise ValueError(f"T and tau must be nonnegative integers, got T={T}, tau={tau}")
    return FlowMap(((linear_s(grid), int(T)), (plateau_bump(grid), int(tau))), step)


def torus_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise distance on S^1 x [0, 1] (theta taken mod 1)."""
    dth = (a[:, 0] - b[:, 0] + 0.5) % 1.0 - 0.5
    return np.hypot(dth, a[:, 1] - b[:, 1])


def sample_points(n: int, seed: int = 0, s_range=(0.0, 1.0)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = s_range
    return np.column_stack([rng.random(n), lo + (hi - lo) * rng.random(n)])


def commutation_error(m1: FlowMap, m2: FlowMap, pts) -> float:
    """max |m1(m2(x)) - m2(m1(x))| over the points."""
    pts = np.asarray(pts, dtype=float)
    return float(torus_distance(m1(m2(pts)), m2(m1(pts))).max())


def rotation_number(m: FlowMap, pt, n_iter: int = ROTATION_ITER, tol: float = ROTATION_TOL) -> RotationNumber:
    """Average theta displacement per application of m, in the universal cover."""
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    start = np.array([[float(pt[0]), float(pt[1])]])
    cur = start.copy()
    half = None
    for k in range(1, n_iter + 1):
        cur = m(cur)
        if k == max(n_iter // 2, 1):
            half = float(cur[0, 0] - start[0, 0]) / k
    value = float(cur[0, 0] - start[0, 0]) / n_iter
    converged = half is None or abs(value - half) <= tol
    return RotationNumber(value, (float(pt[0]), float(pt[1])), n_iter, converged, half)


def area_preservation_error(m: FlowMap, n_test_cells: int = 256) -> float:
    """Largest |det Dm - 1| over centres of an n_test_cells lattice of the annulus.

    Dm is the exact derivative of the discrete map (tangent propagated through
    every RK4 step), i.e. the limit of the area ratio of shrinking test cells.
    """
    k = int(math.ceil(math.sqrt(n_test_cells)))
    c = (np.arange(k) + 0.5) / k
    th, s = np.meshgrid(c, c, indexing="ij")
    pts = np.column_stack([th.ravel(), s.ravel()])[:n_test_cells]
    _, J = m.tangent(pts)
    det = J[:, 0] * J[:, 3] - J[:, 1] * J[:, 2]
    return float(np.max(np.abs(det - 1.0)))

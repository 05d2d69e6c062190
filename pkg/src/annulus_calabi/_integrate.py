"""
Compiled RK4 for Hamiltonian flows of grid fields.

The field is smoothed by the quintic B-spline whose coefficients are the
samples themselves.  That surface is C^4, reproduces linear functions exactly
and is flat wherever the samples are; its skew gradient is divergence free,
so the only area distortion comes from the time stepping.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

GHOST = 3


def padded_samples(samples: np.ndarray, caps: tuple[float, float]) -> np.ndarray:
    """GHOST extra rows on each side: periodic in theta, odd reflection about
    the cap value in s (which keeps each boundary circle invariant)."""
    c0, c1 = caps
    lo = 2 * c0 - samples[:, GHOST - 1::-1]
    hi = 2 * c1 - samples[:, :-GHOST - 1:-1]
    P = np.concatenate([lo, samples, hi], axis=1)
    P = np.concatenate([P[-GHOST:], P, P[:GHOST]], axis=0)
    return np.ascontiguousarray(P)


@njit(cache=True, inline="always", error_model="numpy")
def _locate(P, theta, s):
    """Stencil origin (padded row, padded column) and fractional offsets."""
    n_theta = P.shape[0] - 2 * GHOST
    n_s = P.shape[1] - 2 * GHOST
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    x = theta * n_theta - 0.5
    ix = math.floor(x)
    tx = x - ix
    ix -= n_theta * math.floor(ix / n_theta)
    y = s * n_s - 0.5
    jy = math.floor(y)
    if jy > n_s - 1:
        jy = n_s - 1
    ty = y - jy
    return int(ix) - 2 + GHOST, int(jy) - 2 + GHOST, tx, ty, n_theta, n_s


@njit(cache=True, inline="always", error_model="numpy")
def _quintic(t):
    """Uniform quintic B-spline weights (times 120) for offsets -2..3."""
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    t5 = t4 * t
    u = 1.0 - t
    return (
        u * u * u * u * u,
        26.0 - 50.0 * t + 20.0 * t2 + 20.0 * t3 - 20.0 * t4 + 5.0 * t5,
        66.0 - 60.0 * t2 + 30.0 * t4 - 10.0 * t5,
        26.0 + 50.0 * t + 20.0 * t2 - 20.0 * t3 - 20.0 * t4 + 10.0 * t5,
        1.0 + 5.0 * t + 10.0 * t2 + 10.0 * t3 + 5.0 * t4 - 5.0 * t5,
        t5,
    )


@njit(cache=True, inline="always", error_model="numpy")
def _quintic_d(t):
    """Derivatives of the weights above (times 120)."""
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    u = 1.0 - t
    return (
        -5.0 * u * u * u * u,
        -50.0 + 40.0 * t + 60.0 * t2 - 80.0 * t3 + 25.0 * t4,
        -120.0 * t + 120.0 * t3 - 50.0 * t4,
        50.0 + 40.0 * t - 60.0 * t2 - 80.0 * t3 + 50.0 * t4,
        5.0 + 20.0 * t + 30.0 * t2 + 20.0 * t3 - 25.0 * t4,
        5.0 * t4,
    )


@njit(cache=True, inline="always", error_model="numpy")
def _quintic_dd(t):
    """Second derivatives of the weights (times 120)."""
    t2 = t * t
    t3 = t2 * t
    u = 1.0 - t
    return (
        20.0 * u * u * u,
        40.0 + 120.0 * t - 240.0 * t2 + 100.0 * t3,
        -120.0 + 360.0 * t2 - 200.0 * t3,
        40.0 - 120.0 * t - 240.0 * t2 + 200.0 * t3,
        20.0 + 60.0 * t + 60.0 * t2 - 100.0 * t3,
        20.0 * t3,
    )


@njit(cache=True, inline="always", error_model="numpy")
def _row(P, ii, j0, ref, w, d):
    v0 = P[ii, j0] - ref
    v1 = P[ii, j0 + 1] - ref
    v2 = P[ii, j0 + 2] - ref
    v3 = P[ii, j0 + 3] - ref
    v4 = P[ii, j0 + 4] - ref
    v5 = P[ii, j0 + 5] - ref
    return (w[0] * v0 + w[1] * v1 + w[2] * v2 + w[3] * v3 + w[4] * v4 + w[5] * v5,
            d[0] * v0 + d[1] * v1 + d[2] * v2 + d[3] * v3 + d[4] * v4 + d[5] * v5)


@njit(cache=True, inline="always", error_model="numpy")
def _dot6(w, a0, a1, a2, a3, a4, a5):
    return w[0] * a0 + w[1] * a1 + w[2] * a2 + w[3] * a3 + w[4] * a4 + w[5] * a5


@njit(cache=True, nogil=True, error_model="numpy")
def velocity(P, theta, s, out):
    """(dtheta/dt, ds/dt) = (dF/ds, -dF/dtheta) at one point.

    Samples are taken relative to one stencil value so that a flat stencil
    gives an exactly zero velocity.
    """
    i0, j0, tx, ty, n_theta, n_s = _locate(P, theta, s)
    wx = _quintic(tx)
    dx = _quintic_d(tx)
    wy = _quintic(ty)
    dy = _quintic_d(ty)
    ref = P[i0 + 2, j0 + 2]
    a0, b0 = _row(P, i0, j0, ref, wy, dy)
    a1, b1 = _row(P, i0 + 1, j0, ref, wy, dy)
    a2, b2 = _row(P, i0 + 2, j0, ref, wy, dy)
    a3, b3 = _row(P, i0 + 3, j0, ref, wy, dy)
    a4, b4 = _row(P, i0 + 4, j0, ref, wy, dy)
    a5, b5 = _row(P, i0 + 5, j0, ref, wy, dy)
    out[0] = _dot6(wx, b0, b1, b2, b3, b4, b5) * n_s / 14400.0
    out[1] = -_dot6(dx, a0, a1, a2, a3, a4, a5) * n_theta / 14400.0


@njit(cache=True, nogil=True, error_model="numpy")
def velocity_jacobian(P, theta, s, out):
    """Velocity (out[0:2]) and its derivative d(v_i)/d(theta, s) (out[2:6], row major)."""
    i0, j0, tx, ty, n_theta, n_s = _locate(P, theta, s)
    wx = _quintic(tx)
    dx = _quintic_d(tx)
    ddx = _quintic_dd(tx)
    wy = _quintic(ty)
    dy = _quintic_d(ty)
    ddy = _quintic_dd(ty)
    ref = P[i0 + 2, j0 + 2]
    f_t = 0.0
    f_s = 0.0
    f_tt = 0.0
    f_ts = 0.0
    f_ss = 0.0
    for a in range(6):
        ii = i0 + a
        r0 = 0.0
        r1 = 0.0
        r2 = 0.0
        for b in range(6):
            v = P[ii, j0 + b] - ref
            r0 += wy[b] * v
            r1 += dy[b] * v
            r2 += ddy[b] * v
        f_t += dx[a] * r0
        f_s += wx[a] * r1
        f_tt += ddx[a] * r0
        f_ts += dx[a] * r1
        f_ss += wx[a] * r2
    c = 1.0 / 14400.0
    out[0] = f_s * n_s * c
    out[1] = -f_t * n_theta * c
    out[2] = f_ts * n_theta * n_s * c
    out[3] = f_ss * n_s * n_s * c
    out[4] = -f_tt * n_theta * n_theta * c
    out[5] = -f_ts * n_theta * n_s * c


@njit(cache=True, nogil=True, error_model="numpy")
def flow_tangent(P, pts, jac, dt, n_steps):
    """RK4 of the points together with its exact tangent map.

    ``jac`` is (N, 4) row-major 2x2 matrices, updated by the derivative of each
    RK4 step, so det(jac) measures the area distortion of the discrete map.
    """
    n = pts.shape[0]
    out = pts.copy()
    J = jac.copy()
    k = np.empty((4, 6))
    ka = np.empty((4, 4))
    for p in range(n):
        th = pts[p, 0]
        s = pts[p, 1]
        a = J[p, 0]
        b = J[p, 1]
        c = J[p, 2]
        d = J[p, 3]
        for _ in range(n_steps):
            velocity_jacobian(P, th, s, k[0])
            if k[0, 0] == 0.0 and k[0, 1] == 0.0:
                break
            # stage tangents K_i = Dv(x_i) J_i, with J_i the perturbed tangent
            ja, jb, jc, jd = a, b, c, d
            for st in range(4):
                if st > 0:
                    h = 0.5 * dt if st < 3 else dt
                    velocity_jacobian(P, th + h * k[st - 1, 0], s + h * k[st - 1, 1], k[st])
                    ja = a + h * ka[st - 1, 0]
                    jb = b + h * ka[st - 1, 1]
                    jc = c + h * ka[st - 1, 2]
                    jd = d + h * ka[st - 1, 3]
                v = k[st]
                ka[st, 0] = v[2] * ja + v[3] * jc
                ka[st, 1] = v[2] * jb + v[3] * jd
                ka[st, 2] = v[4] * ja + v[5] * jc
                ka[st, 3] = v[4] * jb + v[5] * jd
            th += dt / 6.0 * (k[0, 0] + 2.0 * k[1, 0] + 2.0 * k[2, 0] + k[3, 0])
            s += dt / 6.0 * (k[0, 1] + 2.0 * k[1, 1] + 2.0 * k[2, 1] + k[3, 1])
            a += dt / 6.0 * (ka[0, 0] + 2.0 * ka[1, 0] + 2.0 * ka[2, 0] + ka[3, 0])
            b += dt / 6.0 * (ka[0, 1] + 2.0 * ka[1, 1] + 2.0 * ka[2, 1] + ka[3, 1])
            c += dt / 6.0 * (ka[0, 2] + 2.0 * ka[1, 2] + 2.0 * ka[2, 2] + ka[3, 2])
            d += dt / 6.0 * (ka[0, 3] + 2.0 * ka[1, 3] + 2.0 * ka[2, 3] + ka[3, 3])
        out[p, 0] = th
        out[p, 1] = s
        J[p, 0] = a
        J[p, 1] = b
        J[p, 2] = c
        J[p, 3] = d
    return out, J


@njit(cache=True, nogil=True, error_model="numpy")
def flow_points(P, pts, dt, n_steps):
    """Advance each (lifted theta, s) by n_steps RK4 steps of size dt.

    Returns the new points and a per-point flag set when s had to be clamped
    into [0, 1].  A point with exactly zero velocity is an equilibrium and is
    left in place.
    """
    n = pts.shape[0]
    out = pts.copy()
    flags = np.zeros(n, dtype=np.bool_)
    k1 = np.empty(2)
    k2 = np.empty(2)
    k3 = np.empty(2)
    k4 = np.empty(2)
    for p in range(n):
        th = pts[p, 0]
        s = pts[p, 1]
        for _ in range(n_steps):
            velocity(P, th, s, k1)
            if k1[0] == 0.0 and k1[1] == 0.0:
                break
            velocity(P, th + 0.5 * dt * k1[0], s + 0.5 * dt * k1[1], k2)
            velocity(P, th + 0.5 * dt * k2[0], s + 0.5 * dt * k2[1], k3)
            velocity(P, th + dt * k3[0], s + dt * k3[1], k4)
            th += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            s += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            if s < 0.0:
                s = 0.0
                flags[p] = True
            elif s > 1.0:
                s = 1.0
                flags[p] = True
        out[p, 0] = th
        out[p, 1] = s
    return out, flags


@njit(cache=True, nogil=True, error_model="numpy")
def velocities(P, pts):
    out = np.empty_like(pts)
    buf = np.empty(2)
    for p in range(pts.shape[0]):
        velocity(P, pts[p, 0], pts[p, 1], buf)
        out[p, 0] = buf[0]
        out[p, 1] = buf[1]
    return out

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import gaussian_filter

from annulus_calabi.calabi import (ROUTES, PercentileAbsent, QmParams, QmValue, calabi_homomorphism,
                                   calabi_sphere_autonomous, concatenate_paths, grid_tolerance,
                                   percentile_value_curve, r_ab_autonomous)
from annulus_calabi.field import (AnnulusGrid, FieldSpec, ScalarField, SphereGluing, integral, linear_s,
                                  materialize, plateau_bump, pushforward, zero_field)
from oracles import linear_s_integral


def test_calabi_homomorphism_zero_and_linear(grid256):
    assert calabi_homomorphism([zero_field(grid256)] * 4, 0.25).value == 0.0
    f = linear_s(grid256)
    v = calabi_homomorphism([f] * 10, 0.1)
    assert v.value == pytest.approx(linear_s_integral(), abs=1e-4)
    assert v.meta["rule"] == "midpoint"
    t = calabi_homomorphism([f.scaled(3.0)] * 5, 0.25)
    assert t.meta["rule"] == "trapezoid"
    assert t.value == pytest.approx(3 * v.value, rel=1e-12)


def test_calabi_homomorphism_rejects_bad_dt(grid64):
    with pytest.raises(ValueError):
        calabi_homomorphism([linear_s(grid64)] * 3, 0.2)
    with pytest.raises(ValueError):
        calabi_homomorphism([], 0.1)


def test_calabi_homomorphism_is_additive_under_concatenation(grid64):
    p1 = [linear_s(grid64, 1.0 + 0.1 * k) for k in range(4)]
    p2 = [plateau_bump(grid64).scaled(k) for k in range(4)]
    joined, dt = concatenate_paths(p1, p2, 0.25)
    lhs = calabi_homomorphism(joined, dt).value
    rhs = calabi_homomorphism(p1, 0.25).value + calabi_homomorphism(p2, 0.25).value
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_cal_sphere_zero_and_displaceable(grid256):
    assert calabi_sphere_autonomous(pushforward(zero_field(grid256), SphereGluing(0.5, 0.5))).value == 0.0
    small = materialize(FieldSpec("plateau_bump", {"p": 0.2, "q": 0.3}), grid256)
    g = pushforward(small, SphereGluing(0.5, 0.5))
    v = calabi_sphere_autonomous(g)
    assert v.meta["median_level"] == 0.0
    assert v.value == pytest.approx(integral(small), abs=1e-15)
    with pytest.raises(ValueError):
        calabi_sphere_autonomous(small)


@pytest.mark.parametrize("route", ROUTES)
@pytest.mark.parametrize("h", [0.1, 0.37, 0.5, 0.9])
def test_r_ab_linear(grid256, route, h):
    T = 4.0
    r = r_ab_autonomous(linear_s(grid256, T), QmParams(1.0, 2 * h), route)
    assert r.value == pytest.approx(h * T, abs=1e-2 * T)
    assert abs(r.value - h * T) <= r.ambiguity


@pytest.mark.parametrize("hp", [0.2, 0.35, 0.5, 0.65, 0.8])
def test_r_ab_bump(grid256, hp):
    r = r_ab_autonomous(plateau_bump(grid256).scaled(3.0), QmParams(0.8 - hp, hp - 0.2))
    assert r.value == pytest.approx(3.0, abs=3e-2)
    assert r.meta["median_level"] == 3.0


def test_routes_agree_and_percentile_absent(grid256):
    f = materialize(FieldSpec("valley_branch", {"attach_h": 0.2, "measure": 0.6}), grid256)
    with pytest.raises(PercentileAbsent):
        r_ab_autonomous(f, QmParams(1.0, 1.0), "percentile-direct")
    lo = r_ab_autonomous(f, QmParams(1.0, 0.2), "percentile-direct")
    assert lo.value == pytest.approx(0.1, abs=1e-2)


def test_r_ab_rejects_noncompact(grid64):
    f = ScalarField(grid64, np.ones(grid64.shape), (1.0, 1.0))
    with pytest.raises(ValueError):
        r_ab_autonomous(f, QmParams(1.0, 1.0))


def test_percentile_curve(grid256):
    hs = np.round(np.arange(0.1, 0.91, 0.1), 2)
    for h, v in percentile_value_curve(linear_s(grid256), hs):
        assert v == pytest.approx(h, abs=5e-3)
    f = materialize(FieldSpec("valley_branch", {"attach_h": 0.2, "measure": 0.6}), grid256)
    curve = dict(percentile_value_curve(f, [0.1, 0.3, 0.5, 0.7, 0.9]))
    assert curve[0.3] is None and curve[0.5] is None and curve[0.7] is None
    assert curve[0.1] is not None and curve[0.9] is not None
    zero = dict(percentile_value_curve(zero_field(grid256), [0.0, 0.5, 1.0]))
    assert zero[0.0] == 0.0 and zero[1.0] == 0.0 and zero[0.5] is None


def test_qm_params():
    p = QmParams.for_percentile(0.3)
    assert p.h == pytest.approx(0.3) and p.sphere_area == pytest.approx(2.0)
    assert QmParams(0.6, 0.4).sphere_area == pytest.approx(2.0)
    assert not QmParams(3.0, 0.0).percentile_compatible
    with pytest.raises(ValueError):
        QmParams(-0.1, 0.0)


def test_qm_value_comparisons():
    p = QmParams(1.0, 1.0)
    a = QmValue(1.0, 0.1, "r_ab", params=p)
    b = QmValue(1.5, 0.1, "r_ab", params=p)
    assert a.definitely_less(b) and b.definitely_greater(a)
    assert a.margin(b) == pytest.approx(0.3)
    assert a.compatible(1.05)
    c = a.combine_commuting(b, defect=0.05)
    assert c.value == 2.5 and c.ambiguity == pytest.approx(0.25)
    with pytest.raises(ValueError):
        a.combine_commuting(QmValue(1.0, 0.0, "r_ab", params=QmParams(0.5, 0.5)))
    assert a.scaled(-2).interval == pytest.approx((-2.2, -1.8))


def test_grid_tolerance(grid256):
    assert grid_tolerance(linear_s(grid256, 5.0), 1.0) == pytest.approx(5.0 * 0.99 * 2 / 256)


def _compact_random(seed: int, n: int = 64) -> ScalarField:
    rng = np.random.default_rng(seed)
    x = gaussian_filter(rng.standard_normal((n, n)), 4.0, mode=("wrap", "nearest"))
    s = (np.arange(n) + 0.5) / n
    taper = np.sin(np.pi * s) ** 2
    return ScalarField(AnnulusGrid(n, n), x * taper[None, :])


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.5), st.floats(0.0, 1.5), st.sampled_from([1, 2, 3]))
def test_homogeneity(seed, a, b, m):
    f = _compact_random(seed)
    p = QmParams(a, b)
    r1 = r_ab_autonomous(f, p).value
    rm = r_ab_autonomous(f.scaled(m), p).value
    assert rm == pytest.approx(m * r1, abs=1e-2 * m)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_routes_agree_on_random_fields(seed, h):
    f = _compact_random(seed)
    p = QmParams.for_percentile(h)
    med = r_ab_autonomous(f, p)
    try:
        per = r_ab_autonomous(f, p, "percentile-direct")
    except PercentileAbsent:
        return
    assert per.value == pytest.approx(med.value, abs=med.ambiguity + per.ambiguity)

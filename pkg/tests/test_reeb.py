from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import gaussian_filter

from annulus_calabi.field import (AnnulusGrid, FieldSpec, ScalarField, SphereGluing, linear_s, materialize,
                                  plateau_bump, pushforward, zero_field)
from annulus_calabi.reeb import (ReebTree, build_reeb_tree, find_median, find_percentile, percentile_gaps)
from annulus_calabi.reeb import _vertex_arrays
from oracles import level_sweep_tree, mask_components, tree_slab_areas


def _star(n_arms=3, m=1.0):
    return ReebTree(levels=np.array([0.0] + [1.0] * n_arms), node_measure=np.zeros(n_arms + 1),
                    edge_lo=np.zeros(n_arms, dtype=np.int64), edge_hi=np.arange(1, n_arms + 1),
                    edge_measure=np.full(n_arms, m), edge_values=[np.array([0.5])] * n_arms,
                    edge_weights=[np.array([m])] * n_arms, bottom_root=None, top_root=None,
                    total_measure=n_arms * m)


def _two_valleys(grid):
    return materialize(FieldSpec("sum", {"terms": [
        FieldSpec("valley_branch", {"attach_h": 0.2, "measure": 0.1}),
        FieldSpec("valley_branch", {"attach_h": 0.6, "measure": 0.2}),
        FieldSpec("linear_s")], "weights": [1, 1, -1]}), grid)


def test_linear_s_tree_is_interval(grid256):
    t = build_reeb_tree(linear_s(grid256))
    assert t.is_tree() and t.is_interval()
    assert t.bottom_root != t.top_root
    assert t.measure_sum() == pytest.approx(1.0)
    assert percentile_gaps(t).gaps == []


def test_tree_round_trip(grid64):
    t = build_reeb_tree(plateau_bump(grid64).plus(linear_s(grid64)))
    assert ReebTree.from_dict(t.to_dict()).same_as(t)


def test_bump_on_sphere_is_path_with_heavy_top(grid256):
    f = pushforward(plateau_bump(grid256), SphereGluing(0.6, 0.4))
    t = build_reeb_tree(f)
    assert t.is_tree() and t.max_valence <= 2
    top = int(np.argmax(t.levels))
    assert t.levels[top] == 1.0
    assert t.node_measure[top] >= 0.8
    assert t.measure_sum() == pytest.approx(2.0)


def test_two_bumps_two_branches_flood_fill(grid256):
    spec = FieldSpec("sum", {"terms": [
        FieldSpec("plateau_bump", {"p": 0.05, "q": 0.1, "center_theta": 0.25}),
        FieldSpec("plateau_bump", {"p": 0.15, "q": 0.2, "center_theta": 0.75})]})
    f = materialize(spec, grid256)
    gaps = percentile_gaps(build_reeb_tree(f))
    got = sorted(b.measure for b in gaps.branches)
    expect = mask_components(f.samples != 0)
    assert len(got) == len(expect) == 2
    assert np.allclose(got, expect, atol=2 * grid256.cell_area)
    assert got[0] == pytest.approx(0.1, abs=0.01) and got[1] == pytest.approx(0.2, abs=0.01)


def test_median_linear_s(grid256):
    m = find_median(build_reeb_tree(linear_s(grid256)))
    assert m.level == pytest.approx(0.5, abs=2 / 256)
    assert m.h == pytest.approx(0.5, abs=1e-9)


def test_median_bump_on_sphere_is_plateau(grid256):
    # a' + b' = 0.6: the sphere has area 1.6 and the plateau holds half of it
    t = build_reeb_tree(pushforward(plateau_bump(grid256), SphereGluing(0.3, 0.3)))
    assert find_median(t).level == 1.0
    # on S^2_{0.6,0.4} (area 2.0) the zero level set is the heavier side
    t = build_reeb_tree(pushforward(plateau_bump(grid256), SphereGluing(0.6, 0.4)))
    assert find_median(t).level == 0.0


def test_median_star_is_centre():
    m = find_median(_star())
    assert m.node == 0 and m.edge is None


def test_percentile_linear_s(grid256):
    t = build_reeb_tree(linear_s(grid256))
    assert find_percentile(t, 0.37).level == pytest.approx(0.37, abs=2 / 256)
    p0 = find_percentile(t, 0.0)
    assert p0.node == t.bottom_root
    with pytest.raises(ValueError):
        find_percentile(t, 1.5)


def test_branch_gap_absent_percentiles(grid256):
    f = materialize(FieldSpec("valley_branch", {"attach_h": 0.2, "measure": 0.6}), grid256)
    t = build_reeb_tree(f)
    for h in np.linspace(0.21, 0.79, 12):
        assert find_percentile(t, h) is None
    assert find_percentile(t, 0.1) is not None and find_percentile(t, 0.9) is not None
    gaps = percentile_gaps(t)
    assert len(gaps.gaps) == 1
    lo, hi, m = gaps.gaps[0]
    assert lo == pytest.approx(0.2, abs=0.02) and hi == pytest.approx(0.8, abs=0.02)
    assert gaps.branches[0].measure == pytest.approx(0.6, abs=0.02)


def test_two_gaps(grid256):
    gaps = percentile_gaps(build_reeb_tree(_two_valleys(grid256)))
    lengths = sorted(hi - lo for lo, hi, _ in gaps.gaps)
    assert len(lengths) == 2
    assert lengths[0] == pytest.approx(0.1, abs=0.01) and lengths[1] == pytest.approx(0.2, abs=0.01)


def test_zero_field_is_one_node(grid64):
    t = build_reeb_tree(zero_field(grid64))
    assert t.n_nodes == 1 and t.n_edges == 0
    assert find_percentile(t, 0.5) is None
    assert find_percentile(t, 0.0).node == t.bottom_root
    assert percentile_gaps(t).gaps == [(0.0, 1.0, 1.0)]


def test_sphere_tree_has_no_roots(grid64):
    t = build_reeb_tree(pushforward(linear_s(grid64), SphereGluing(0.5, 0.5)))
    assert t.bottom_root is None
    with pytest.raises(ValueError):
        find_percentile(t, 0.5)


def _random_field(seed: int, n: int = 48, sigma: float = 3.0, positive: bool = False) -> ScalarField:
    rng = np.random.default_rng(seed)
    x = gaussian_filter(rng.standard_normal((n, n)), sigma, mode=("wrap", "nearest"))
    x = x + 1e-6 * rng.standard_normal((n, n))
    if positive:
        x = x - x.min() + 0.05
    return ScalarField(AnnulusGrid(n, n), x, (0.0, 0.0))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.booleans(), st.floats(1.5, 4.0))
def test_reeb_matches_level_sweep_oracle(seed, positive, sigma):
    f = _random_field(seed, 48, sigma, positive)
    t = build_reeb_tree(f)
    vals, areas = _vertex_arrays(f)
    o = level_sweep_tree(vals, areas, 48, 48)
    cell = f.grid.cell_area
    assert t.n_nodes == o["n_nodes"]
    assert int(np.count_nonzero(t.degrees() == 1)) == o["n_leaves"]
    for mine, ref in zip(tree_slab_areas(t, o["critical_values"]), o["slab_areas"]):
        assert len(mine) == len(ref)
        assert np.allclose(mine, ref, atol=2 * cell)
    assert t.is_tree()
    assert t.measure_sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_measure_conservation_and_order(seed):
    t = build_reeb_tree(_random_field(seed, 32))
    assert t.measure_sum() == pytest.approx(t.total_measure, abs=1e-12)
    assert np.all(t.levels[t.edge_lo] <= t.levels[t.edge_hi])
    for e in range(t.n_edges):
        v = t.edge_values[e]
        assert np.all(v >= t.levels[t.edge_lo[e]]) and np.all(v <= t.levels[t.edge_hi[e]])


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_percentiles_monotone_on_stem(seed, h):
    t = build_reeb_tree(_random_field(seed, 32, 4.0))
    p = find_percentile(t, h)
    if p is None:
        gaps = percentile_gaps(t)
        assert any(lo - 1e-9 <= h <= hi + 1e-9 for lo, hi, _ in gaps.gaps)
    else:
        assert p.h == pytest.approx(h)

from __future__ import annotations

import numpy as np
import pytest

from annulus_calabi.certify import (CONSISTENT, H_A, H_B, INCONSISTENT, INVALID, Tolerances, branch_candidate,
                                    check_candidate, expected_series, naive_candidate, params_A, params_B,
                                    perturbed, reproduce_paper_ledger)
from annulus_calabi.field import AnnulusGrid, ScalarField, SphereGluing, linear_s, pushforward, zero_field


def test_expected_series_values():
    a, b = expected_series(10, 7)
    row_a = next(r for r in a if r["h"] == 0.5)
    row_b = next(r for r in b if r["h"] == 0.5)
    assert row_a["value"] == pytest.approx(5.0) and row_b["value"] == pytest.approx(12.0)
    assert (row_a["a"], row_a["b"]) == (1.0, 1.0)
    assert (row_b["a"], row_b["b"]) == pytest.approx((0.3, 0.3))
    a, b = expected_series(5, 5)
    by_h = {r["h"]: r["value"] for r in a}
    assert all(r["value"] - by_h[r["h"]] == pytest.approx(5.0) for r in b)
    with pytest.raises(ValueError):
        expected_series(-1, 0)


def test_parameter_families_share_percentiles():
    for h in H_A:
        assert params_A(h).h == pytest.approx(h)
    for h in H_B:
        p = params_B(h)
        assert p.h == pytest.approx(h) and p.sphere_area == pytest.approx(1.6)


def test_naive_candidate_fails_series(grid128):
    cert = check_candidate(naive_candidate(5, grid128), 5, 5)
    assert cert.verdict == INCONSISTENT
    assert cert.route == "series"
    hs = sorted(c["h"] for c in cert.conflicts)
    assert hs == list(H_B)
    assert all(c["margin"] > 4.5 for c in cert.conflicts)


def test_branch_candidate_fails_rotation(grid128):
    cert = check_candidate(branch_candidate(5, grid128), 5, 5)
    assert cert.verdict == INCONSISTENT
    assert "rotation" in cert.routes and "series" not in cert.routes
    assert cert.rotation_candidate == pytest.approx(0.0, abs=1e-2)
    gaps = cert.gap_found["gaps"]
    assert any(gp["h_lo"] <= 0.2 and gp["h_hi"] >= 0.8 for gp in gaps)


def test_perturbed_naive_still_inconsistent(grid128):
    cert = check_candidate(perturbed(naive_candidate(5, grid128), 1e-3, seed=3), 5, 5)
    assert cert.verdict == INCONSISTENT and cert.route == "series"


def test_zero_candidate_consistent_so_far(grid64):
    cert = check_candidate(zero_field(grid64), 0, 0)
    assert cert.verdict == CONSISTENT and cert.routes == []
    assert any("vacuous" in n for n in cert.notes)


def test_tau_zero_naive_is_consistent(grid128):
    cert = check_candidate(naive_candidate(3, grid128), 3, 0)
    assert cert.verdict == CONSISTENT
    assert any("vacuous" in n for n in cert.notes)


@pytest.mark.parametrize("make", [
    lambda g: ScalarField(g, np.ones(g.shape), (1.0, 1.0)),
    lambda g: pushforward(linear_s(g), SphereGluing(0.5, 0.5)),
])
def test_invalid_candidates(grid64, make):
    cert = check_candidate(make(grid64), 5, 5)
    assert cert.verdict == INVALID and cert.notes


def test_invalid_times_and_grid(grid64):
    assert check_candidate(linear_s(grid64), -1, 5).verdict == INVALID
    assert check_candidate(linear_s(grid64), 5, 5, grid=AnnulusGrid(32, 32)).verdict == INVALID


def test_certificate_serializes(grid64):
    cert = check_candidate(naive_candidate(2, grid64), 2, 2, Tolerances(rotation_iter=4))
    d = cert.to_dict()
    assert d["verdict"] == INCONSISTENT and d["routes"] == ["series"]
    assert len(d["series_A"]) == len(H_A) and len(d["series_B"]) == len(H_B)


def test_ledger_margins_and_rotation(grid256):
    rep = reproduce_paper_ledger(2, 3, grid256, n_commute_points=16)
    assert rep["conflict_found"]
    for c in rep["conflicts"]:
        assert c["margin"] == pytest.approx(3.0, abs=0.1)
    assert rep["rotation"]["g_rotation"] == pytest.approx(2.0, abs=1e-2)
    assert rep["commutation_error"] <= 1e-3
    vac = reproduce_paper_ledger(2, 0, grid256, n_commute_points=4)
    assert not vac["conflict_found"] and vac["notes"]

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from stopgrid import (
    ModelParams,
    MultipleSignChangeError,
    NoSignChangeError,
    PiGrid,
    b1_closed_form,
    build_g,
    diagnostics,
    eval_h,
    find_boundary,
    paste_candidate,
    solve_sequence,
    v1_eval,
)

import oracles

# regression snapshot of the base run; b_1 and b_2 are independently checked below
FIG3_BOUNDARIES = [0.7439750182, 0.7355831726, 0.7291028441, 0.7236049886, 0.7187299508,
                   0.7142950138, 0.7101924654, 0.7063525125, 0.7027268171, 0.6992804161]


def test_boundaries_snapshot(fig3):
    assert np.allclose(fig3.boundaries, FIG3_BOUNDARIES, atol=1e-9)


def test_level_one_matches_closed_form(fig3):
    b1 = b1_closed_form(fig3.derived)
    assert fig3.boundaries[0] == b1
    assert abs(fig3.b1_numeric - b1) < 1e-9
    assert np.max(np.abs(fig3.level(1).v_n.values - v1_eval(fig3.grid.nodes, fig3.derived))) < 1e-12


@pytest.mark.parametrize("eps,b2", [(0.1, 0.7355825486684752), (0.2, 0.7320676898523009),
                                    (1.0, 0.7171040090435664)])
def test_b2_against_quadrature_oracle(eps, b2):
    res = solve_sequence(ModelParams(-1, 1, 4, 0.1, 2, eps))
    assert abs(res.boundaries[1] - b2) < 1e-5


def test_b2_oracle_is_live():
    k, rho = oracles.k_rho(-1, 1, 4)
    g = oracles.gamma_root(0.1, rho)
    assert oracles.b2_root(k, rho, g, 0.2) == pytest.approx(0.7320676898523009, abs=1e-9)


def test_single_right():
    res = solve_sequence(ModelParams(-1, 1, 4, 0.1, 1, 0.3))
    assert len(res.levels) == 1
    assert res.boundaries[0] == b1_closed_form(res.derived)


def test_no_learning_degenerates():
    res = solve_sequence(ModelParams(-1, 1, 4, 0.1, 6, 0.0))
    b1 = b1_closed_form(res.derived)
    v1 = res.level(1).v_n.values
    for lv in res.levels:
        assert abs(lv.b_n - b1) < 1e-9
        assert np.max(np.abs(lv.v_n.values - lv.n * v1)) < 1e-9


def test_diagnostics_clean(fig3):
    diag = diagnostics(fig3)
    assert diag["boundaries_nonincreasing_in_n"]
    for row in diag["levels"]:
        assert row["chain_violation"] < 1e-9
        assert row["min_second_diff_v"] > -1e-9
        assert row["min_second_diff_f"] > -1e-9
        assert row["b_le_b1"] and row["b_gt_pi0"]
        assert row["pi0_n"] <= row["pi_star_n"] + 1e-3
        assert row["pi_star_n"] <= fig3.derived.k + 1e-3
        assert row["v_at_1_error"] < 1e-9


def test_find_boundary_linear_root():
    grid = PiGrid(11)
    h = grid.interior - 0.43
    assert find_boundary(h, grid, 0.9) == pytest.approx(0.43)


def test_find_boundary_errors():
    grid = PiGrid(11)
    with pytest.raises(NoSignChangeError):
        find_boundary(np.ones(9), grid, 0.9)
    with pytest.raises(NoSignChangeError):
        find_boundary(-np.ones(9), grid, 0.9)
    with pytest.raises(NoSignChangeError):
        find_boundary(grid.interior - 0.85, grid, 0.5)
    wiggle = np.array([-1, 1, -1, 1, 1, 1, 1, 1, 1], dtype=float)
    with pytest.raises(MultipleSignChangeError):
        find_boundary(wiggle, grid, 0.9)


def test_find_boundary_skips_leading_zeros():
    grid = PiGrid(11)
    h = np.array([0, 0, -1, -1, 1, 1, 1, 1, 1], dtype=float)
    assert find_boundary(h, grid, 0.9) == pytest.approx(0.45)


def test_paste_candidate_continuity(fig3):
    d = fig3.derived
    g = build_g(None, d, fig3.grid)
    b = b1_closed_form(d)
    v = paste_candidate(g, b, d)
    assert np.max(np.abs(v.values - v1_eval(fig3.grid.nodes, d))) < 1e-12


def test_h_sign_pattern(fig3):
    d = fig3.derived
    h = eval_h(fig3.level(4).g_n, d)
    x = fig3.grid.interior
    b = fig3.level(4).b_n
    assert np.all(h[(x > 0.05) & (x < b - 1e-3)] < 0)
    assert np.all(h[x > b + 1e-3] > 0)


@settings(max_examples=12, deadline=None)
@given(st.floats(-5, -0.2), st.floats(0.2, 5), st.floats(0.5, 10), st.floats(0.01, 0.5),
       st.integers(1, 5), st.floats(0.0, 1.0))
def test_invariants_random_params(mu0, mu1, sigma, r, n, eps):
    p = ModelParams(mu0, mu1, sigma, r, n, eps)
    grid = PiGrid(801)
    assume(b1_closed_form(p.derived()) < 1 - 4 * grid.h)
    res = solve_sequence(p, grid)
    diag = diagnostics(res)
    for row in diag["levels"]:
        assert row["chain_violation"] < 1e-6
        assert min(row["min_second_diff_v"], row["min_second_diff_f"]) > -1e-6
        assert row["b_gt_pi0"] and row["b_le_b1"]
        assert row["smooth_fit_residual"] < 1e-3


def test_boundary_beyond_grid_is_reported():
    p = ModelParams(-4, 1, 1, 0.0625, 1, 0.0)
    assert b1_closed_form(p.derived()) > 1 - 1 / 800
    with pytest.raises(NoSignChangeError, match="level n=1"):
        solve_sequence(p, PiGrid(801))

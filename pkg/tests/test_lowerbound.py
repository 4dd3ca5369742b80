import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from lrnorm_lab._simplex import simplex_solve
from lrnorm_lab.errors import NumericalFailure, ParameterError
from lrnorm_lab.lowerbound import (
    DiscreteMeasure,
    MomentLPProblem,
    build_prior_pair,
    chi2_bound,
    log_chi2_bound,
    solve_moment_lp,
    symmetrize_scale,
    tilt_measures,
    tv_bound,
)


def epigraph_value(q, K, lo, hi, expo, grid):
    """Best uniform approximation of t^expo by span{t^{-q+1..K}}, doubled.

    Independent check: monomial basis, scipy's interior-point/simplex via
    the epigraph trick  minimize s  s.t.  |sum a_l t^l - f(t)| <= s.
    """
    t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * np.arange(grid) / (grid - 1))[::-1]
    f = t**expo
    V = np.stack([t**l for l in range(-q + 1, K + 1)], axis=1)
    ncoef = V.shape[1]
    A_ub = np.block([[V, -np.ones((grid, 1))], [-V, -np.ones((grid, 1))]])
    res = linprog(
        np.r_[np.zeros(ncoef), 1.0],
        A_ub=A_ub,
        b_ub=np.r_[f, -f],
        bounds=[(None, None)] * (ncoef + 1),
        method="highs",
    )
    assert res.status == 0
    return 2.0 * res.fun


# ---------------------------------------------------------------------------
# simplex core
# ---------------------------------------------------------------------------

def test_simplex_agrees_with_reference_solver_on_random_programs():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m = rng.integers(1, 8)
        n = rng.integers(m, 20)
        A = rng.normal(size=(m, n))
        # start from a known feasible point so most instances are solvable
        x0 = rng.uniform(0, 1, n) * (rng.random(n) < 0.6)
        b = A @ x0
        c = rng.normal(size=n)
        ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
        try:
            x, val = simplex_solve(c, A, b)
        except NumericalFailure as e:
            assert ref.status == 3 and "unbounded" in str(e)
            continue
        assert ref.status == 0
        assert np.allclose(A @ x, b, atol=1e-7)
        assert (x >= -1e-12).all()
        assert val == pytest.approx(ref.fun, abs=1e-7 * max(1.0, abs(ref.fun)))


def test_simplex_survives_beale_cycling_example():
    # classic degenerate instance that cycles under naive pivoting
    c = np.array([-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0])
    A = np.array(
        [
            [0.25, -60.0, -1.0 / 25.0, 9.0, 1.0, 0.0, 0.0],
            [0.5, -90.0, -1.0 / 50.0, 3.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
    x, val = simplex_solve(c, A, np.array([0.0, 0.0, 1.0]))
    assert val == pytest.approx(-0.05, abs=1e-9)


def test_simplex_detects_infeasible():
    with pytest.raises(NumericalFailure, match="infeasible"):
        simplex_solve(
            np.array([1.0, 1.0]),
            np.array([[1.0, 1.0], [1.0, 1.0]]),
            np.array([1.0, 2.0]),
        )


def test_simplex_detects_unbounded():
    with pytest.raises(NumericalFailure, match="unbounded"):
        simplex_solve(np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))


def test_simplex_drops_redundant_rows():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0, 1.0])
    x, val = simplex_solve(np.array([1.0, 2.0, 3.0]), A, b)
    assert np.allclose(A @ x, b)
    assert val == pytest.approx(2.0)


def test_simplex_shape_mismatch():
    with pytest.raises(ValueError):
        simplex_solve(np.ones(3), np.ones((2, 4)), np.ones(2))


def test_simplex_iteration_budget():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 12))
    b = A @ rng.uniform(0.1, 1.0, 12)
    with pytest.raises(NumericalFailure, match="budget"):
        simplex_solve(rng.normal(size=12), A, b, maxiter=1)


# ---------------------------------------------------------------------------
# discrete measures
# ---------------------------------------------------------------------------

def test_measure_moments_by_hand():
    mu = DiscreteMeasure(np.array([-2.0, 1.0]), np.array([0.25, 0.75]))
    assert mu.moment(0) == pytest.approx(1.0)
    assert mu.moment(1) == pytest.approx(0.25)  # -0.5 + 0.75
    assert mu.moment(2) == pytest.approx(1.75)
    assert mu.abs_moment(1.5) == pytest.approx(0.25 * 2.0**1.5 + 0.75)


def test_measure_negative_moment_needs_zero_free_support():
    mu = DiscreteMeasure(np.array([0.0, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        mu.moment(-1)
    ok = DiscreteMeasure(np.array([0.5, 1.0]), np.array([0.5, 0.5]))
    assert ok.moment(-1) == pytest.approx(1.5)


def test_measure_validation():
    with pytest.raises(ParameterError, match="increasing"):
        DiscreteMeasure(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError, match="nonnegative"):
        DiscreteMeasure(np.array([0.0, 1.0]), np.array([-0.1, 1.1]))
    with pytest.raises(ParameterError, match="sum to 1"):
        DiscreteMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
    with pytest.raises(ParameterError):
        DiscreteMeasure(np.array([]), np.array([]))


# ---------------------------------------------------------------------------
# moment-matching LP
# ---------------------------------------------------------------------------

def test_lp_value_zero_when_objective_in_span():
    # t^2 is one of the matched functionals once K >= 2, so no pair of
    # moment-matched measures can separate it
    prob = MomentLPProblem(
        q=1, K=2, intervalLo=0.01, intervalHi=1.0, gridSize=200, objectiveExponent=2.0
    )
    nu0, nu1, value = solve_moment_lp(prob)
    assert abs(value) < 1e-12


def test_lp_value_positive_outside_span():
    prob = MomentLPProblem(
        q=1, K=3, intervalLo=0.01, intervalHi=1.0, gridSize=500, objectiveExponent=-0.5
    )
    _, _, value = solve_moment_lp(prob)
    assert value > 0.1


def test_lp_matches_epigraph_oracle():
    prob = MomentLPProblem(
        q=1, K=3, intervalLo=0.01, intervalHi=1.0, gridSize=500, objectiveExponent=-0.5
    )
    _, _, value = solve_moment_lp(prob)
    ref = epigraph_value(1, 3, 0.01, 1.0, -0.5, 500)
    assert value == pytest.approx(ref, rel=1e-4)
    # frozen regression for this exact grid
    assert value == pytest.approx(3.41675621, rel=1e-7)


def test_lp_returned_measures_are_matched_and_tight():
    prob = MomentLPProblem(
        q=2, K=3, intervalLo=0.02, intervalHi=1.0, gridSize=300, objectiveExponent=-1.5
    )
    nu0, nu1, value = solve_moment_lp(prob)
    for nu in (nu0, nu1):
        assert nu.support[0] >= 0.02 - 1e-12 and nu.support[-1] <= 1.0 + 1e-12
        assert nu.moment(0) == pytest.approx(1.0, abs=1e-12)
    for l in range(-1, 4):
        assert nu1.moment(l) - nu0.moment(l) == pytest.approx(0.0, abs=1e-9)
    # the reported value is attained by the returned pair
    f1 = nu1.weights @ nu1.support**-1.5
    f0 = nu0.weights @ nu0.support**-1.5
    assert f1 - f0 == pytest.approx(value, rel=1e-9)


def test_lp_grid_refinement_is_consistent():
    vals = []
    for grid in (200, 800):
        prob = MomentLPProblem(
            q=1, K=3, intervalLo=0.01, intervalHi=1.0, gridSize=grid, objectiveExponent=-0.5
        )
        vals.append(solve_moment_lp(prob)[2])
    assert vals[0] == pytest.approx(vals[1], rel=5e-3)


def test_lp_scaling_across_interval_sizes():
    # with I = [1/lnN^2, 1], K ~ lnN and f = t^{r/2-q}, the value scaled by
    # (lnN)^{r-2q} settles to a constant within a factor of two
    q, r = 1, 1.0
    scaled = []
    for lnN in (4.0, 9.0, 16.0):
        K = math.ceil(lnN)
        prob = MomentLPProblem(
            q=q,
            K=K,
            intervalLo=lnN**-2,
            intervalHi=1.0,
            gridSize=50 * (K + q),
            objectiveExponent=r / 2.0 - q,
        )
        scaled.append(solve_moment_lp(prob)[2] * lnN ** (r - 2 * q))
    assert max(scaled) <= 2.0 * min(scaled)


def test_lp_problem_validation():
    with pytest.raises(ParameterError):
        MomentLPProblem(q=0, K=3, intervalLo=0.01, intervalHi=1.0, gridSize=200, objectiveExponent=1.0)
    with pytest.raises(ParameterError):
        MomentLPProblem(q=1, K=0, intervalLo=0.01, intervalHi=1.0, gridSize=200, objectiveExponent=1.0)
    with pytest.raises(ParameterError):
        MomentLPProblem(q=1, K=3, intervalLo=-0.1, intervalHi=1.0, gridSize=200, objectiveExponent=1.0)
    with pytest.raises(ParameterError):
        MomentLPProblem(q=1, K=3, intervalLo=0.5, intervalHi=0.2, gridSize=200, objectiveExponent=1.0)
    coarse = MomentLPProblem(
        q=1, K=3, intervalLo=0.01, intervalHi=1.0, gridSize=150, objectiveExponent=1.0
    )
    with pytest.raises(ParameterError, match="gridSize"):
        solve_moment_lp(coarse)


# ---------------------------------------------------------------------------
# tilting
# ---------------------------------------------------------------------------

def test_tilt_fixes_point_at_interval_floor():
    lnN = 9.0
    nu = DiscreteMeasure(np.array([lnN**-2]), np.array([1.0]))
    out = tilt_measures(nu, 1, lnN)
    assert out.support.tolist() == [lnN**-2]
    assert out.weights[0] == pytest.approx(1.0, abs=1e-12)


def test_tilt_sends_unit_mass_to_zero_atom():
    lnN = 9.0
    out = tilt_measures(DiscreteMeasure(np.array([1.0]), np.array([1.0])), 1, lnN)
    assert out.support.tolist() == [0.0, 1.0]
    assert out.weights[0] == pytest.approx(1.0 - lnN**-2, rel=1e-12)
    assert out.weights[1] == pytest.approx(lnN**-2, rel=1e-12)


def test_tilt_exact_qth_moment():
    lnN = 7.0
    nu = DiscreteMeasure(np.array([0.1, 0.4, 1.0]), np.array([0.2, 0.5, 0.3]))
    for q in (1, 2):
        out = tilt_measures(nu, q, lnN)
        assert out.moment(q) == pytest.approx(lnN ** (-2 * q), rel=1e-12)


def test_tilt_preserves_matched_moments():
    lnN = 9.0
    q, K = 1, 3
    prob = MomentLPProblem(
        q=q, K=K, intervalLo=lnN**-2, intervalHi=1.0, gridSize=250, objectiveExponent=-0.5
    )
    nu0, nu1, _ = solve_moment_lp(prob)
    t0 = tilt_measures(nu0, q, lnN)
    t1 = tilt_measures(nu1, q, lnN)
    for l in range(0, q + K + 1):
        assert t1.moment(l) - t0.moment(l) == pytest.approx(0.0, abs=1e-10)


def test_tilt_rejects_support_outside_window():
    with pytest.raises(ParameterError, match="support"):
        tilt_measures(DiscreteMeasure(np.array([0.001]), np.array([1.0])), 1, 9.0)
    with pytest.raises(ParameterError):
        tilt_measures(DiscreteMeasure(np.array([0.5]), np.array([1.0])), 0, 9.0)


# ---------------------------------------------------------------------------
# symmetrization
# ---------------------------------------------------------------------------

def test_symmetrize_splits_atoms_into_sign_pairs():
    lnN = 9.0
    out = symmetrize_scale(DiscreteMeasure(np.array([0.0, 1.0]), np.array([0.3, 0.7])), lnN)
    assert out.support.tolist() == [-3.0, 0.0, 3.0]
    assert out.weights.tolist() == [0.35, 0.3, 0.35]


def test_symmetrize_odd_moments_vanish_exactly():
    lnN = 6.0
    nu = DiscreteMeasure(np.array([0.0, 0.2, 0.9]), np.array([0.5, 0.25, 0.25]))
    out = symmetrize_scale(nu, lnN)
    for l in (1, 3, 5, 7):
        assert out.moment(l) == 0.0


def test_symmetrize_preserves_even_structure():
    lnN = 6.0
    nu = DiscreteMeasure(np.array([0.2, 0.9]), np.array([0.4, 0.6]))
    out = symmetrize_scale(nu, lnN)
    # int t^{2k} d(out) = int (x lnN)^k d(nu)
    for k in (1, 2, 3):
        want = nu.weights @ (nu.support * lnN) ** k
        assert out.moment(2 * k) == pytest.approx(want, rel=1e-12)
    assert out.abs_moment(1.3) == pytest.approx(
        nu.weights @ np.sqrt(nu.support * lnN) ** 1.3, rel=1e-12
    )


def test_symmetrize_rejects_negative_support():
    with pytest.raises(ParameterError):
        symmetrize_scale(DiscreteMeasure(np.array([-0.5, 1.0]), np.array([0.5, 0.5])), 9.0)


# ---------------------------------------------------------------------------
# full prior construction
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("r,p", [(1.0, 2.0), (3.0, 4.0)])
def test_prior_pair_conditions(r, p):
    lnN = 9.0
    pair = build_prior_pair(r, p, lnN, 1.0)
    q = math.ceil(p / 2.0)
    assert pair.separation > 0.0
    assert pair.momentResiduals.max() <= 1e-8
    cap = lnN ** (-p / 2.0)
    assert pair.pMomentBounds[0] <= cap * (1.0 + 1e-9)
    assert pair.pMomentBounds[1] <= cap * (1.0 + 1e-9)
    for mu in (pair.mu0, pair.mu1):
        assert mu.moment(2 * q) == pytest.approx(lnN**-q, rel=1e-10)
        assert abs(mu.support).max() <= math.sqrt(lnN) + 1e-12
    # separation is the LP value carried through the scaling maps
    assert pair.separation == pytest.approx(
        pair.lpValue * lnN ** (r / 2.0 - 2 * q), rel=1e-9
    )


@pytest.mark.parametrize("r,p", [(1.0, 2.0), (3.0, 4.0)])
def test_prior_pair_separation_scaling(r, p):
    scaled = [
        build_prior_pair(r, p, lnN, 1.0).separation * lnN ** (r / 2.0)
        for lnN in (4.0, 9.0, 16.0)
    ]
    assert max(scaled) <= 2.0 * min(scaled)


def test_prior_pair_validation():
    with pytest.raises(ParameterError, match="non-even"):
        build_prior_pair(2.0, 4.0, 9.0, 1.0)
    with pytest.raises(ParameterError):
        build_prior_pair(0.5, 2.0, 9.0, 1.0)
    with pytest.raises(ParameterError):
        build_prior_pair(3.0, 2.0, 9.0, 1.0)  # p < r
    with pytest.raises(ParameterError):
        build_prior_pair(1.0, math.inf, 9.0, 1.0)
    with pytest.raises(ParameterError):
        build_prior_pair(1.0, 2.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        build_prior_pair(1.0, 2.0, 9.0, 0.0)


# ---------------------------------------------------------------------------
# chi-square and total-variation bounds
# ---------------------------------------------------------------------------

def test_chi2_bound_frozen_values():
    # reference digits from a 60-digit evaluation of the closed form
    assert chi2_bound(1.0, 4.0, 100) == pytest.approx(6.60406784e25, rel=1e-9)
    assert chi2_bound(1.0, 8.0, 100) == pytest.approx(5.35716882801e-13, rel=1e-9)
    assert chi2_bound(0.5, 4.0, 100) == pytest.approx(1.30157124798e-6, rel=1e-9)
    assert chi2_bound(1.0, 2.0, 50) == pytest.approx(3.64493967695e179, rel=1e-9)


def test_log_chi2_bound_frozen_values():
    assert log_chi2_bound(1.0, 2.0, 100) == pytest.approx(973.403342478007, rel=1e-12)
    assert log_chi2_bound(1.0, 4.0, 100) == pytest.approx(59.4523131234183, rel=1e-12)
    assert log_chi2_bound(1.0, 8.0, 100) == pytest.approx(-28.2551705771175, rel=1e-12)


def test_chi2_overflow_goes_to_inf_but_log_stays_finite():
    assert chi2_bound(1.0, 2.0, 100) == math.inf
    assert math.isfinite(log_chi2_bound(1.0, 2.0, 100))


def test_chi2_decreasing_in_moment_count():
    logs = [log_chi2_bound(1.0, d, 100) for d in (2.0, 4.0, 8.0)]
    assert logs[0] > logs[1] > logs[2]


def test_chi2_vanishes_for_small_alpha():
    assert chi2_bound(1e-9, 4.0, 100) < 1e-6
    assert chi2_bound(1e-300, 4.0, 100) == 0.0


@given(
    a=st.floats(0.05, 0.95),
    bump=st.floats(0.05, 1.0),
    d=st.floats(1.0, 8.0),
)
@settings(max_examples=60, deadline=None)
def test_log_chi2_increasing_in_alpha(a, bump, d):
    # both exponential factors grow with alpha, so the bound must too
    assert log_chi2_bound(a, d, 100) <= log_chi2_bound(a + bump, d, 100) + 1e-9


def test_chi2_parameter_validation():
    with pytest.raises(ParameterError):
        chi2_bound(0.0, 4.0, 100)
    with pytest.raises(ParameterError):
        chi2_bound(1.0, -1.0, 100)
    with pytest.raises(ParameterError):
        log_chi2_bound(1.0, 4.0, 1)


def test_tv_bound_composition():
    assert tv_bound(0.0) == pytest.approx(0.5)
    assert tv_bound(chi2_bound(1.0, 8.0, 100)) < 1.0
    assert tv_bound(1e6) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        tv_bound(-0.5)

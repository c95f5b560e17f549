"""
Tests for optimizer module.

This module tests the closed forms, the feasibility classification, the
analytic optimizer, the brute-force oracle and the feedback constraint.
"""

import logging
import math

import numpy as np
import pytest

from witsopt.costs import best_linear_cost, gaussian_thresholds, optimal_gaussian_cost
from witsopt.gausscore import (
    CorrelationPoint,
    ModelParams,
    build_joint_covariance,
    conditional_mi,
    gaussian_mi,
    schur_mmse,
)
from witsopt.optimizer import (
    Branch,
    CaseTag,
    OracleResult,
    UndefinedLogArgument,
    analytic_optimum,
    brute_force_min,
    case1_optimal_rho5_squared,
    classify,
    estimation_cost,
    feedback_constraint_value,
    info_constraint_value,
    mmse_coefficients,
    objective_terms,
    repair_to_case2,
)

SWEEP_PARAMS = [(0.8, 0.1), (1.0, 0.2), (0.4, 0.15)]


def _sweep_powers(params: ModelParams) -> np.ndarray:
    return np.array([0.05 * k * params.Q for k in range(1, 20)])


def _logdet_constraint(point, P, params) -> float:
    cov = build_joint_covariance(point, P, params)
    return gaussian_mi(cov, {"W1", "W2"}, {"Y1"}) - conditional_mi(cov, {"W2"}, {"X0"}, {"W1"})


class TestObjectiveTerms:
    """Tests for objective_terms and the closed forms."""

    def test_interior_optimum_terms(self, params, interior_point):
        """Test T1, T2 and f1 at the P = 0.3 optimum."""
        terms = objective_terms(interior_point, 0.3, params)
        assert terms.T1 == pytest.approx(-0.2)
        assert terms.T2 == pytest.approx(0.0, abs=1e-12)
        assert terms.f1 == pytest.approx(0.1)
        assert terms.f == pytest.approx(0.1)

    def test_all_zero_terms(self, params):
        """Test T1 = -(P + Q + N), T2 = 0 and f1 = f = Q + P at the origin."""
        terms = objective_terms(CorrelationPoint(0.0, 0.0, 0.0, 0.0), 0.3, params)
        assert terms.T1 == pytest.approx(-1.2)
        assert terms.T2 == 0.0
        assert terms.f1 == pytest.approx(1.1)
        assert terms.f == pytest.approx(1.1)

    def test_t2_hand_value(self, params):
        """Test T2 = -0.1 with rho2 = rho4 = 0 and rho5^2 = 1/3."""
        point = CorrelationPoint(0.0, -0.8165, 0.0, math.sqrt(1.0 / 3.0))
        assert objective_terms(point, 0.3, params).T2 == pytest.approx(-0.1)

    def test_monotone_transform(self, params, feasible_points):
        """Test that N f / (N + f) reproduces the estimation cost."""
        for point, P in feasible_points[:200]:
            f = objective_terms(point, P, params).f
            expected = params.N * f / (params.N + f)
            assert estimation_cost(point, P, params) == pytest.approx(expected, abs=1e-12)

    def test_f_undefined_at_unit_rho4(self, params):
        """Test that f is None when rho4^2 = 1."""
        terms = objective_terms(CorrelationPoint(0.0, 0.0, 1.0, 0.0), 0.3, params)
        assert terms.f is None

    def test_all_zero_point(self, params):
        """Test the constraint and cost at the all-zero point."""
        point = CorrelationPoint(0.0, 0.0, 0.0, 0.0)
        assert info_constraint_value(point, 0.3, params) == pytest.approx(0.0, abs=1e-15)
        assert estimation_cost(point, 0.3, params) == pytest.approx(0.0916667, abs=1e-7)

    def test_estimation_cost_is_n_at_unit_rho4(self, params):
        """Test that rho4^2 = 1 gives exactly N."""
        point = CorrelationPoint(0.2, -0.3, -1.0, 0.4)
        assert estimation_cost(point, 0.3, params) == params.N

    def test_undefined_log_argument(self, params):
        """Test that a non-positive ratio raises UndefinedLogArgument."""
        # T1 > 0 while T1 - T2 < 0
        point = CorrelationPoint(1.0, 0.0, 0.5, 0.0)
        terms = objective_terms(point, 0.3, params)
        assert terms.T1 > 0 and terms.T1 - terms.T2 < 0
        with pytest.raises(UndefinedLogArgument, match="not positive"):
            info_constraint_value(point, 0.3, params)


class TestDualPathIdentities:
    """Closed forms against the log-det and Schur-complement evaluations."""

    def test_information_constraint(self, params, feasible_points):
        """Test the closed-form constraint against log-det mutual information."""
        for point, P in feasible_points:
            closed = info_constraint_value(point, P, params)
            assert closed == pytest.approx(_logdet_constraint(point, P, params), abs=1e-9)

    def test_estimation_cost(self, params, feasible_points):
        """Test the closed-form cost against the Schur-complement MMSE."""
        for point, P in feasible_points:
            cov = build_joint_covariance(point, P, params)
            schur = schur_mmse(cov, "X1", ("W1", "W2", "Y1"))
            assert estimation_cost(point, P, params) == pytest.approx(schur, abs=1e-9)

    def test_other_constants(self, feasible_sampler):
        """Test both identities for constants with an empty time-sharing window."""
        params = ModelParams(Q=0.4, N=0.15)
        for point, P in feasible_sampler(params, count=200, seed=11):
            cov = build_joint_covariance(point, P, params)
            assert info_constraint_value(point, P, params) == pytest.approx(
                _logdet_constraint(point, P, params), abs=1e-9
            )
            assert estimation_cost(point, P, params) == pytest.approx(
                schur_mmse(cov, "X1", ("W1", "W2", "Y1")), abs=1e-9
            )


class TestClassify:
    """Tests for classify."""

    def test_all_zero_is_case2(self, params):
        """Test that the all-zero point satisfies the Case-2 constraints."""
        case = classify(CorrelationPoint(0.0, 0.0, 0.0, 0.0), 0.3, params)
        assert case.tag == CaseTag.CASE2
        assert case.holds["D2"]

    def test_large_w_correlations_are_infeasible(self, params):
        """Test rho2 = rho4 = 0.9 is infeasible with (B) violated."""
        case = classify(CorrelationPoint(0.9, 0.0, 0.9, 0.0), 0.3, params)
        assert case.tag == CaseTag.INFEASIBLE
        assert case.holds["B"] is False
        assert case.slacks["B"] < 0

    def test_case1_point(self, params):
        """Test a point satisfying every Case-1 constraint."""
        # rho2^2 + rho4^2 > 1, rho3^2 + rho5^2 >= 1 + N/P and T2 >= 0
        point = CorrelationPoint(0.9, -0.9, 0.9, 0.9)
        case = classify(point, 0.3, params)
        assert case.tag == CaseTag.CASE1
        assert case.holds["A"] and case.holds["B"] and case.holds["D1"]

    def test_positive_t2_leaves_case2(self, params):
        """Test that T2 > 0 violates (D2)."""
        point = CorrelationPoint(0.8, 0.0, 0.0, 0.1)
        case = classify(point, 0.3, params)
        assert case.tag != CaseTag.CASE2
        assert case.holds["D2"] is False

    def test_zero_power(self, params):
        """Test that P = 0 never lands in Case 1."""
        case = classify(CorrelationPoint(0.9, 0.9, 0.9, 0.9), 0.0, params)
        assert case.tag != CaseTag.CASE1

    def test_feasible_points_are_case2(self, params, feasible_points):
        """Test that sampled interior points classify as Case 2 with a nonnegative constraint."""
        for point, P in feasible_points[:200]:
            assert classify(point, P, params).tag == CaseTag.CASE2
            assert info_constraint_value(point, P, params) >= 0.0


class TestAnalyticOptimum:
    """Tests for analytic_optimum."""

    def test_interior_reference(self, params):
        """Test the optimum at P = 0.3."""
        optimum = analytic_optimum(0.3, params)
        assert optimum.branch == Branch.INTERIOR
        assert optimum.S == pytest.approx(0.05, abs=1e-12)
        assert optimum.point.rho3 == pytest.approx(-0.8164966, abs=1e-6)
        assert optimum.point.rho5 == pytest.approx(0.5773503, abs=1e-6)
        assert optimum.point.rho2 == pytest.approx(0.7071068, abs=1e-6)
        assert optimum.point.rho4 == 0.0
        assert abs(optimum.constraint_value) <= 1e-12

    def test_boundary_branch(self, params, narrow_params):
        """Test the boundary branch outside the window."""
        optimum = analytic_optimum(0.7, params)
        assert optimum.branch == Branch.BOUNDARY
        assert optimum.point.as_tuple() == (0.0, -1.0, 0.0, 0.0)
        assert analytic_optimum(0.2, narrow_params).branch == Branch.BOUNDARY

    def test_power_above_source_variance(self, params):
        """Test that P >= Q reaches S = 0 with a binding constraint."""
        optimum = analytic_optimum(1.0, params)
        assert optimum.branch == Branch.PGEQ
        assert optimum.S == 0.0
        assert optimum.point.rho2 == pytest.approx(math.sqrt(0.2 / 0.3))
        assert abs(optimum.constraint_value) <= 1e-9
        assert analytic_optimum(params.Q, params).point.rho2 == 0.0

    def test_zero_power(self, params):
        """Test that P = 0 yields the uncontrolled cost."""
        optimum = analytic_optimum(0.0, params)
        assert optimum.S == pytest.approx(params.Q * params.N / (params.Q + params.N))

    def test_rejects_negative_power(self, params):
        """Test that a negative power is rejected."""
        with pytest.raises(ValueError, match="nonnegative"):
            analytic_optimum(-1.0, params)

    @pytest.mark.parametrize("Q,N", SWEEP_PARAMS)
    def test_matches_closed_form_and_binds(self, Q, N):
        """Test S equals the optimal Gaussian cost and the constraint binds."""
        params = ModelParams(Q=Q, N=N)
        for P in list(_sweep_powers(params)) + [1.3 * Q, 2.0 * Q]:
            optimum = analytic_optimum(P, params)
            assert optimum.S == pytest.approx(optimal_gaussian_cost(P, params), abs=1e-12)
            assert abs(info_constraint_value(optimum.point, P, params)) <= 1e-9
            assert estimation_cost(optimum.point, P, params) == pytest.approx(optimum.S, abs=1e-9)

    def test_boundary_without_window(self):
        """Test the boundary branch and the affine cost when Q <= 4N."""
        params = ModelParams(Q=0.3, N=0.1)
        optimum = analytic_optimum(0.05, params)
        assert optimum.branch == Branch.BOUNDARY
        assert optimum.S == pytest.approx(best_linear_cost(0.05, params), abs=1e-12)

    def test_optimum_classifies_as_case2(self, params):
        """Test that every analytic optimum lies in Case 2."""
        for P in list(_sweep_powers(params)) + [0.0, 1.0]:
            optimum = analytic_optimum(float(P), params)
            assert classify(optimum.point, float(P), params).tag == CaseTag.CASE2

    @pytest.mark.parametrize("scale", [0.5, 4.0])
    def test_scale_covariance(self, params, scale):
        """Test that scaling (Q, N, P) scales S and keeps the correlations."""
        scaled = params.scaled(scale)
        for P in (0.05, 0.3, 0.7):
            base = analytic_optimum(P, params)
            moved = analytic_optimum(scale * P, scaled)
            assert moved.S == pytest.approx(scale * base.S, rel=1e-9, abs=1e-15)
            np.testing.assert_allclose(moved.point.as_tuple(), base.point.as_tuple(), atol=1e-9)

    def test_window_endpoints(self, params):
        """Test the interior branch at both thresholds."""
        thresholds = gaussian_thresholds(params)
        for P in (thresholds.P1, thresholds.P2):
            optimum = analytic_optimum(P, params)
            assert optimum.branch == Branch.INTERIOR
            assert abs(optimum.constraint_value) <= 1e-9


class TestCase1Limit:
    """Tests for the Case-1 regime."""

    def test_cost_tends_to_n(self, params):
        """Test |S - N| shrinks to zero as rho4^2 tends to 1 along the optimal rho5."""
        P, rho2, rho3 = 0.3, 0.6, -0.5
        gaps = []
        for gap in (1e-1, 1e-3, 1e-5, 1e-7):
            rho4 = math.sqrt(1.0 - gap)
            rho5 = math.sqrt(case1_optimal_rho5_squared(rho2, rho3, rho4, P, params))
            S = estimation_cost(CorrelationPoint(rho2, rho3, rho4, rho5), P, params)
            gaps.append(abs(S - params.N))
        assert all(later <= earlier for earlier, later in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-6

    def test_optimal_rho5_is_clipped(self, params):
        """Test clipping of the D1-binding rho5^2 to [0, 1]."""
        assert case1_optimal_rho5_squared(0.9, 0.0, 0.1, 0.3, params) == 1.0
        assert case1_optimal_rho5_squared(0.0, 0.0, 0.5, 0.3, params) == 0.0
        assert case1_optimal_rho5_squared(0.5, 0.5, 1.0, 0.3, params) == 1.0


class TestRepairToCase2:
    """Tests for repair_to_case2."""

    def test_result_is_case2(self, params):
        """Test that arbitrary vectors are mapped into Case 2 with signs kept."""
        rng = np.random.default_rng(3)
        for _ in range(500):
            x = rng.uniform(-1.5, 1.5, size=4)
            P = float(rng.uniform(0.01, 2.0))
            point = repair_to_case2(x, P, params)
            assert classify(point, P, params).tag == CaseTag.CASE2
            clipped = np.clip(x, -1.0, 1.0)
            for value, original in zip(point.as_tuple(), clipped):
                assert value == 0.0 or math.copysign(1.0, value) == math.copysign(1.0, original)

    def test_feasible_point_unchanged(self, params, interior_point):
        """Test that a Case-2 point is returned as is."""
        repaired = repair_to_case2(interior_point.as_tuple(), 0.3, params)
        assert repaired.rho3 == interior_point.rho3
        assert repaired.rho4 == interior_point.rho4
        assert repaired.rho2 == pytest.approx(interior_point.rho2, abs=1e-12)


class TestBruteForceMin:
    """Tests for the brute-force oracle."""

    def test_reference_point(self, params):
        """Test the oracle against S_G(0.3) = 0.05."""
        result = brute_force_min(0.3, params, resolution=0.05)
        assert isinstance(result, OracleResult)
        S_min, argmin, case = result
        assert S_min == pytest.approx(0.05, abs=5e-3)
        assert S_min >= 0.05 - 1e-6
        assert case.tag == CaseTag.CASE2
        assert abs(info_constraint_value(argmin, 0.3, params)) <= 1e-6
        assert result.evaluated == 41 * 21**3

    def test_refinement_improves_grid(self, params):
        """Test that refinement never worsens the grid minimum."""
        refined = brute_force_min(0.3, params, resolution=0.1)
        unrefined = brute_force_min(0.3, params, resolution=0.1, refine=False)
        assert refined.grid_S_min == unrefined.S_min
        assert refined.S_min <= unrefined.S_min

    def test_parallel_scan_is_deterministic(self, params):
        """Test that the worker count does not change the result."""
        serial = brute_force_min(0.2, params, resolution=0.05)
        parallel = brute_force_min(0.2, params, resolution=0.05, max_workers=4)
        assert serial.S_min == parallel.S_min
        assert serial.argmin == parallel.argmin
        assert serial.grid_argmin == parallel.grid_argmin

    def test_case1_points_do_not_undercut_n(self, params):
        """Test the Case-1 bookkeeping of the scan."""
        result = brute_force_min(0.3, params, resolution=0.05, refine=False)
        assert result.case1_points > 0
        assert result.feasible >= result.case1_points

    def test_zero_power(self, params):
        """Test the degenerate P = 0 answer."""
        result = brute_force_min(0.0, params)
        assert result.S_min == pytest.approx(params.Q * params.N / (params.Q + params.N))

    def test_boundary_power(self, params):
        """Test the oracle at P = 0.7 against S_l(0.7)."""
        result = brute_force_min(0.7, params, resolution=0.05)
        assert result.S_min == pytest.approx(best_linear_cost(0.7, params), abs=1e-3)

    def test_power_above_source_variance(self, params):
        """Test that the oracle cancels the state for P > Q."""
        result = brute_force_min(0.9, params, resolution=0.05)
        assert result.S_min == pytest.approx(0.0, abs=1e-4)

    def test_narrow_window(self, narrow_params):
        """Test that Q <= 4N reproduces the affine cost."""
        result = brute_force_min(0.2, narrow_params, resolution=0.05)
        assert result.S_min == pytest.approx(optimal_gaussian_cost(0.2, narrow_params), abs=5e-3)

    @pytest.mark.parametrize("resolution", [0.0, -0.1, 0.2])
    def test_rejects_bad_resolution(self, params, resolution):
        """Test resolution validation."""
        with pytest.raises(ValueError, match="resolution"):
            brute_force_min(0.3, params, resolution=resolution)

    def test_rejects_bad_workers(self, params):
        """Test max_workers validation."""
        with pytest.raises(ValueError, match="max_workers"):
            brute_force_min(0.3, params, resolution=0.1, max_workers=0)

    def test_logs_scan(self, params, caplog):
        """Test that the scan reports its size."""
        with caplog.at_level(logging.INFO, logger="witsopt.optimizer"):
            brute_force_min(0.3, params, resolution=0.1, refine=False)
        assert "Scanning" in caplog.text

    @pytest.mark.slow
    @pytest.mark.parametrize("Q,N", SWEEP_PARAMS)
    def test_oracle_sweep(self, Q, N):
        """Test the oracle against the closed-form optimum on 19 power levels."""
        params = ModelParams(Q=Q, N=N)
        for P in _sweep_powers(params):
            result = brute_force_min(float(P), params, resolution=0.02, max_workers=4)
            theory = optimal_gaussian_cost(float(P), params)
            assert abs(result.S_min - theory) <= 5e-3, f"P={P}"
            assert result.S_min >= theory - 1e-6, f"P={P}"


class TestFeedbackConstraint:
    """Tests for the channel-feedback constraint."""

    def test_equals_constraint_at_random_points(self, params, feasible_points):
        """Test agreement with the information constraint where U2 depends on W2."""
        checked = 0
        for point, P in feasible_points:
            a, b, c = mmse_coefficients(point, P, params)
            if abs(b) <= 1e-3:
                continue
            feedback = feedback_constraint_value(point, P, params)
            assert feedback == pytest.approx(info_constraint_value(point, P, params), abs=1e-9)
            checked += 1
            if checked == 100:
                break
        assert checked == 100

    @pytest.mark.parametrize("Q,N", SWEEP_PARAMS)
    def test_equals_constraint_at_optimum(self, Q, N):
        """Test agreement at every analytic optimum of the power sweep."""
        params = ModelParams(Q=Q, N=N)
        for P in _sweep_powers(params):
            optimum = analytic_optimum(float(P), params)
            value = feedback_constraint_value(optimum.point, float(P), params)
            assert value == pytest.approx(optimum.constraint_value, abs=1e-9), f"P={P}"

    @pytest.mark.parametrize("P", [0.05, 0.3, 0.5, 0.7])
    def test_equals_constraint_inside_and_outside_window(self, params, P):
        """Test agreement at the analytic optimum inside and outside the window."""
        optimum = analytic_optimum(P, params)
        value = feedback_constraint_value(optimum.point, P, params)
        assert value == pytest.approx(optimum.constraint_value, abs=1e-9)

    def test_estimate_ignores_w2_when_state_is_cancelled(self, params):
        """Test that above P = Q the estimate does not use W2 and only I(W1; Y1) remains."""
        P = 1.0
        optimum = analytic_optimum(P, params)
        a, b, c = mmse_coefficients(optimum.point, P, params)
        assert abs(b) < 1e-12
        cov = build_joint_covariance(optimum.point, P, params)
        expected = gaussian_mi(cov, {"W1"}, {"Y1"})
        assert feedback_constraint_value(optimum.point, P, params) == pytest.approx(expected)
        assert feedback_constraint_value(optimum.point, P, params) >= optimum.constraint_value

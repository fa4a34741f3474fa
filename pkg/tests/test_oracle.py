"""Exact LP oracles: simplex correctness, transport LP, barycenter LP, grid."""

import numpy as np
import pytest

from otkit.core import CostMatrix, DiscreteMeasure, DomainError
from otkit.oracle import (
    exact_barycenter_lp,
    exact_ot_lp,
    regularized_wb_grid,
    simplex_solve,
)
from otkit.rounding import round_to_polytope
from otkit.sinkhorn import sinkhorn_solve
from conftest import random_instance


class TestSimplex:
    def test_basic_lp(self):
        # min -x1 - 2 x2 s.t. x1 + x2 + s = 4, x1 + 3 x2 + t = 6
        c = np.array([-1.0, -2.0, 0.0, 0.0])
        A = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, 3.0, 0.0, 1.0]])
        b = np.array([4.0, 6.0])
        sol = simplex_solve(c, A, b)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-5.0)  # x = (3, 1)
        assert np.allclose(sol.primal[:2], [3.0, 1.0])

    def test_infeasible(self):
        # x1 = 1 and x1 = 2 simultaneously
        sol = simplex_solve(np.zeros(1), np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
        assert sol.status == "infeasible"

    def test_unbounded(self):
        # min -x1 with only x2 pinned
        sol = simplex_solve(np.array([-1.0, 0.0]), np.array([[0.0, 1.0]]), np.array([1.0]))
        assert sol.status == "unbounded"

    def test_redundant_rows_handled(self):
        # duplicate constraint rows
        c = np.array([1.0, 1.0])
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        b = np.array([1.0, 1.0])
        sol = simplex_solve(c, A, b)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0)


class TestExactOtLp:
    def test_diagonal_optimum(self):
        p = np.array([0.3, 0.7])
        C = CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        sol = exact_ot_lp(C, p, p)
        assert sol.objective == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(sol.primal.reshape(2, 2), np.diag(p), atol=1e-12)

    def test_hand_derived_two_by_two(self):
        # cost = 0.9 - 2 pi_00, maximized pi_00 = min(p_0, q_0) = 0.3
        C = CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        sol = exact_ot_lp(C, [0.3, 0.7], [0.6, 0.4])
        assert sol.objective == pytest.approx(0.3, abs=1e-12)
        assert np.allclose(sol.primal.reshape(2, 2), [[0.3, 0.0], [0.3, 0.4]], atol=1e-12)

    def test_lower_bounds_any_feasible_plan(self):
        rng = np.random.default_rng(11)
        for seed in range(5):
            C, p, q = random_instance(40 + seed, 6)
            opt = exact_ot_lp(C, p, q).objective
            raw = rng.uniform(0.0, 1.0, (6, 6))
            raw /= raw.sum()
            feasible = round_to_polytope(raw, p, q)
            assert opt <= float((feasible.entries * C.entries).sum()) + 1e-9

    def test_vertex_support_size(self):
        for seed in range(5):
            C, p, q = random_instance(60 + seed, 7)
            sol = exact_ot_lp(C, p, q)
            assert np.count_nonzero(sol.primal > 1e-12) <= 2 * 7 - 1

    def test_optimality_certificate(self):
        C, p, q = random_instance(77, 8)
        sol = exact_ot_lp(C, p, q)
        assert sol.reduced_costs is not None
        assert sol.reduced_costs.min() >= -1e-9
        # complementary slackness: positive variables have zero reduced cost
        slack = np.abs(sol.primal * sol.reduced_costs)
        assert slack.max() <= 1e-9

    def test_feasibility_of_solution(self):
        C, p, q = random_instance(78, 9)
        sol = exact_ot_lp(C, p, q)
        plan = sol.primal.reshape(9, 9)
        assert np.abs(plan.sum(axis=1) - p).max() <= 1e-9
        assert np.abs(plan.sum(axis=0) - q).max() <= 1e-9

    def test_size_refusal(self):
        n = 33
        with pytest.raises(DomainError):
            exact_ot_lp(np.zeros((n, n)), np.full(n, 1 / n), np.full(n, 1 / n))


class TestExactBarycenterLp:
    def test_single_measure(self):
        C, p, _ = random_instance(90, 4)
        q_opt, val = exact_barycenter_lp([p], C)
        assert val == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(q_opt, p, atol=1e-9)

    def test_identical_measures(self):
        C, p, _ = random_instance(91, 5)
        q_opt, val = exact_barycenter_lp([p, p, p], C)
        assert val == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(q_opt, p, atol=1e-9)

    def test_never_above_candidate_marginals(self):
        # the optimum is at most the value of placing q at any single p_l
        C, p, q = random_instance(92, 3)
        _, val = exact_barycenter_lp([p, q], C)
        at_p = 0.5 * (exact_ot_lp(C, p, p).objective + exact_ot_lp(C, q, p).objective)
        at_q = 0.5 * (exact_ot_lp(C, p, q).objective + exact_ot_lp(C, q, q).objective)
        assert val <= min(at_p, at_q) + 1e-9

    def test_size_refusal(self):
        C = np.zeros((8, 8))
        ms = [np.full(8, 1 / 8)] * 8  # 8 * 64 + 8 = 520 > 400
        with pytest.raises(DomainError):
            exact_barycenter_lp(ms, C)


class TestRegularizedGrid:
    def test_identical_measures_small_gamma(self):
        # at small gamma the regularized minimizer is near p, so the best
        # grid point is within one cell of it
        C, p, _ = random_instance(95, 2)
        gamma = 0.05 * C.inf_norm
        q_grid, _ = regularized_wb_grid([p, p], C, gamma, grid_step=0.1)
        assert np.abs(q_grid - p).max() <= 0.1 + 1e-12

    def test_refinement_monotonicity(self):
        C, p, q = random_instance(96, 2)
        gamma = 0.2 * C.inf_norm
        _, coarse = regularized_wb_grid([p, q], C, gamma, grid_step=0.125)
        _, fine = regularized_wb_grid([p, q], C, gamma, grid_step=0.0625)
        assert fine <= coarse + 1e-12

    def test_matches_ibp_on_two_point_support(self):
        from otkit.barycenter import BarycenterProblem, ibp_solve

        C, p, q = random_instance(97, 2)
        gamma = 0.2 * C.inf_norm
        step = 0.05
        q_grid, _ = regularized_wb_grid([p, q], C, gamma, grid_step=step)
        problem = BarycenterProblem((DiscreteMeasure(p), DiscreteMeasure(q)), C, gamma)
        sol = ibp_solve(problem, eps_prime=1e-8)
        assert np.abs(q_grid - sol.q_bar).max() <= step + 1e-4

    def test_size_refusal(self):
        with pytest.raises(DomainError):
            regularized_wb_grid([np.full(4, 0.25)], np.zeros((4, 4)), 0.1, 0.1)


def test_grid_consistent_with_long_sinkhorn():
    # the grid oracle's per-point evaluation agrees with a direct solve
    C, p, q = random_instance(98, 2)
    gamma = 0.3 * C.inf_norm
    state, plan = sinkhorn_solve(C, gamma, p, q, eps_prime=1e-10, check_every=1)
    from otkit.core import reg_primal_objective

    direct = reg_primal_objective(plan.entries, C, gamma)
    q_grid, val = regularized_wb_grid([p], C, gamma, grid_step=0.02)
    # minimizing over q can only do as well as or better than W_gamma(p, q)
    assert val <= direct + 1e-6

"""Accelerated alternating minimization: smooth dual, iterate algebra, pipeline."""

import math

import numpy as np
import pytest

from otkit.aam import (
    AamState,
    DistanceBound,
    aam_iterate,
    aam_solve,
    accelerated_ot,
    dual_objective_lip,
    dual_partial_gradients,
    normalized_coupling,
)
from otkit.core import reg_primal_objective, transport_cost
from otkit.oracle import exact_ot_lp
from otkit.sinkhorn import approx_ot_sinkhorn
from conftest import random_instance


def _phi(state_vec, C, gamma, p, q):
    n = state_vec.size // 2
    return dual_objective_lip((state_vec[:n], state_vec[n:]), C, gamma, p, q)


class TestSmoothDual:
    def test_origin_zero_cost(self):
        n, gamma = 6, 0.3
        p = np.full(n, 1.0 / n)
        val = dual_objective_lip((np.zeros(n), np.zeros(n)), np.zeros((n, n)), gamma, p, p)
        assert val == pytest.approx(2.0 * gamma * math.log(n))

    def test_shift_invariance(self):
        C, p, q = random_instance(30, 5)
        rng = np.random.default_rng(0)
        u, v = rng.normal(size=5), rng.normal(size=5)
        base = dual_objective_lip((u, v), C, 0.4, p, q)
        shifted = dual_objective_lip((u + 3.7, v - 1.2), C, 0.4, p, q)
        assert shifted == pytest.approx(base, abs=1e-10)

    def test_matches_sinkhorn_fixed_point_value(self):
        # at a converged dual point, -phi equals the regularized objective
        from otkit.sinkhorn import sinkhorn_solve

        C = np.array([[0.0, 1.0], [1.0, 0.0]])
        p, q = np.array([0.3, 0.7]), np.array([0.6, 0.4])
        gamma = 0.05
        state, plan = sinkhorn_solve(C, gamma, p, q, 1e-11, check_every=1)
        phi = dual_objective_lip(state.pot, C, gamma, p, q)
        assert -phi == pytest.approx(reg_primal_objective(plan.entries, C, gamma), abs=1e-9)


class TestGradients:
    def test_zero_where_marginal_matches(self):
        n = 4
        p = np.full(n, 1.0 / n)
        q = np.array([0.4, 0.3, 0.2, 0.1])
        gu, gv = dual_partial_gradients(
            (np.zeros(n), np.zeros(n)), np.zeros((n, n)), 0.5, p, q
        )
        assert np.abs(gu).max() <= 1e-15
        assert np.allclose(gv, 0.5 * (np.full(n, 1.0 / n) - q))

    def test_blocks_sum_to_zero(self):
        C, p, q = random_instance(31, 6)
        rng = np.random.default_rng(1)
        gu, gv = dual_partial_gradients(
            (rng.normal(size=6), rng.normal(size=6)), C, 0.3, p, q
        )
        assert abs(gu.sum()) <= 1e-12
        assert abs(gv.sum()) <= 1e-12

    def test_finite_differences(self):
        C, p, q = random_instance(32, 4)
        rng = np.random.default_rng(2)
        x = rng.normal(size=8)
        gu, gv = dual_partial_gradients((x[:4], x[4:]), C, 0.6, p, q)
        grad = np.concatenate([gu, gv])
        fd = np.zeros(8)
        for k in range(8):
            h = 1e-6 * (1.0 + abs(x[k]))
            e = np.zeros(8)
            e[k] = h
            fd[k] = (_phi(x + e, C, 0.6, p, q) - _phi(x - e, C, 0.6, p, q)) / (2 * h)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(grad) <= 1e-5


class TestIterate:
    def test_first_step_weight_formula(self):
        # with zero accumulated weight, a1 = 2 delta / ||grad||^2
        C, p, q = random_instance(33, 5)
        gamma = 0.3
        state0 = AamState.initial(C, gamma)
        state1 = aam_iterate(state0, C, gamma, p, q)
        mu = state1.mu
        gu, gv = dual_partial_gradients((mu[:5], mu[5:]), C, gamma, p, q)
        gsq = float(gu @ gu + gv @ gv)
        delta = _phi(mu, C, gamma, p, q) - _phi(state1.eta, C, gamma, p, q)
        assert state1.A_big == pytest.approx(2.0 * delta / gsq, rel=1e-10)

    def test_step_equation_residual(self):
        C, p, q = random_instance(34, 6)
        gamma = 0.2 * C.inf_norm
        state = AamState.initial(C, gamma)
        for _ in range(15):
            prev = state
            state = aam_iterate(state, C, gamma, p, q)
            a = state.A_big - prev.A_big
            mu = state.mu
            gu, gv = dual_partial_gradients((mu[:6], mu[6:]), C, gamma, p, q)
            gsq = float(gu @ gu + gv @ gv)
            residual = (
                _phi(mu, C, gamma, p, q)
                - a * a / (2.0 * (prev.A_big + a)) * gsq
                - _phi(state.eta, C, gamma, p, q)
            )
            assert abs(residual) <= 1e-10

    def test_monotone_dual_values(self):
        C, p, q = random_instance(35, 8)
        gamma = 0.15 * C.inf_norm
        state = AamState.initial(C, gamma)
        last = _phi(state.eta, C, gamma, p, q)
        for _ in range(40):
            state = aam_iterate(state, C, gamma, p, q)
            value = _phi(state.eta, C, gamma, p, q)
            assert value <= last + 1e-11
            last = value

    def test_accumulated_weight_nondecreasing(self):
        C, p, q = random_instance(36, 5)
        state = AamState.initial(C, 0.3)
        for _ in range(20):
            prev = state
            state = aam_iterate(state, C, 0.3, p, q)
            assert state.A_big >= prev.A_big

    def test_plan_average_simplex(self):
        C, p, q = random_instance(37, 6)
        state = AamState.initial(C, 0.2)
        for _ in range(30):
            state = aam_iterate(state, C, 0.2, p, q)
            assert state.plan_avg.min() >= 0.0
            assert state.plan_avg.sum() == pytest.approx(1.0, abs=1e-9)

    def test_shift_invariance_pointwise(self):
        # the normalization leaves the dual value, both gradient blocks and
        # the coupling unchanged at any point
        C, p, q = random_instance(38, 5)
        rng = np.random.default_rng(12)
        for _ in range(10):
            u, v = rng.normal(size=5) * 3, rng.normal(size=5) * 3
            us, vs = u - u.max(), v - v.max()
            assert dual_objective_lip((us, vs), C, 0.3, p, q) == pytest.approx(
                dual_objective_lip((u, v), C, 0.3, p, q), abs=1e-12
            )
            g1 = np.concatenate(dual_partial_gradients((u, v), C, 0.3, p, q))
            g2 = np.concatenate(dual_partial_gradients((us, vs), C, 0.3, p, q))
            assert np.abs(g1 - g2).max() <= 1e-12
            assert np.abs(
                normalized_coupling(u, v, C, 0.3) - normalized_coupling(us, vs, C, 0.3)
            ).max() <= 1e-12

    def test_shift_normalization_leaves_trajectory_unchanged(self):
        C, p, q = random_instance(38, 5)
        gamma = 0.25 * C.inf_norm
        s_on = AamState.initial(C, gamma)
        s_off = AamState.initial(C, gamma)
        for _ in range(30):
            s_on = aam_iterate(s_on, C, gamma, p, q, shift_normalize=True)
            s_off = aam_iterate(s_off, C, gamma, p, q, shift_normalize=False)
            assert _phi(s_on.eta, C, gamma, p, q) == pytest.approx(
                _phi(s_off.eta, C, gamma, p, q), abs=1e-9
            )
            assert np.abs(s_on.plan_avg - s_off.plan_avg).max() <= 1e-9


class TestDistanceBound:
    def test_formula(self):
        C, p, q = random_instance(39, 8)
        gamma = 0.3
        D = DistanceBound.from_instance(C, gamma, p, q).value
        expected = math.sqrt(4.0) * (
            C.inf_norm - 0.5 * gamma * math.log(min(p.min(), q.min()))
        )
        assert D == pytest.approx(expected)

    def test_positive(self):
        C, p, q = random_instance(39, 8)
        assert DistanceBound.from_instance(C, 0.3, p, q).value > 0


class TestAcceleratedPipeline:
    def test_zero_cost_short_circuit(self):
        p = np.array([0.3, 0.7])
        q = np.array([0.6, 0.4])
        plan, report = accelerated_ot(np.zeros((2, 2)), p, q, eps=0.2)
        assert report.objective == 0.0
        assert report.iterations == 0
        assert plan.feasible_for is not None

    def test_two_by_two_within_window(self):
        C = np.array([[0.0, 1.0], [1.0, 0.0]])
        p, q = np.array([0.3, 0.7]), np.array([0.6, 0.4])
        opt = exact_ot_lp(C, p, q).objective
        plan, _ = accelerated_ot(C, p, q, eps=0.05)
        cost = transport_cost(plan.entries, C)
        assert opt - 1e-12 <= cost <= opt + 0.05

    def test_random_against_lp_and_sinkhorn(self):
        C, p, q = random_instance(41, 16)
        eps = 0.1 * C.inf_norm
        plan_a, _ = accelerated_ot(C, p, q, eps)
        plan_s, _ = approx_ot_sinkhorn(C, p, q, eps)
        opt = exact_ot_lp(C, p, q).objective
        cost_a = transport_cost(plan_a.entries, C)
        cost_s = transport_cost(plan_s.entries, C)
        assert cost_a - opt <= eps
        assert abs(cost_a - cost_s) <= 2.0 * eps

    def test_envelopes_along_trace(self):
        from otkit.core import smooth_marginals

        C, p, q = random_instance(42, 8)
        eps = 0.1 * C.inf_norm
        trace: list[dict] = []
        _, report = accelerated_ot(C, p, q, eps, trace=trace)
        gamma = report.params["gamma"]
        ps, qs = smooth_marginals(p, q, report.params["eps_prime"])
        D = DistanceBound.from_instance(C, gamma, ps.weights, qs.weights).value
        for row in trace:
            t = row["iteration"]
            assert abs(row["duality_gap"]) <= 32.0 * D * D / (gamma * t * t)
            assert row["feasibility_l2"] <= 32.0 * D / (gamma * t * t)


def test_aam_solve_certificate():
    C, p, q = random_instance(43, 6)
    gamma = 0.1 * C.inf_norm
    state, report = aam_solve(C, gamma, p, q, gap_tol=1e-9)
    assert report.certificate <= 1e-9
    # the certified sandwich really contains the high-precision optimum
    from otkit.sinkhorn import sinkhorn_solve

    _, plan = sinkhorn_solve(C, gamma, p, q, 1e-11, check_every=1)
    w_star = reg_primal_objective(plan.entries, C, gamma)
    assert report.objective - 1e-9 <= w_star <= report.objective + report.certificate + 1e-9

"""Fixed-support Wasserstein barycenters.

Iterative Bregman projections (the m-measure generalization of Sinkhorn
with a shared geometric-mean column marginal), its accelerated variant on
the smooth dual with the zero-sum constraint on the column potentials,
and the Fenchel-Legendre machinery for the regularized transport value
used by the decentralized solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as _lse

from .core import (
    ConvergenceError,
    CostMatrix,
    DiscreteMeasure,
    DomainError,
    ParameterError,
    SolveReport,
    TransportPlan,
    as_matrix,
    as_weights,
    neg_entropy,
    smooth_measure,
    transport_cost,
)
from .rounding import round_to_polytope

IBP_TRACE_COLUMNS = ("sweep", "iteration", "dual_value", "marginal_spread")
AIBP_TRACE_COLUMNS = (
    "iteration",
    "dual_value",
    "primal_value",
    "duality_gap",
    "rounding_cost_gap",
)


@dataclass(frozen=True)
class BarycenterProblem:
    """Shared-cost barycenter instance with uniform weights 1/m."""

    measures: tuple
    cost: CostMatrix
    gamma: float

    def __post_init__(self):
        if not self.measures:
            raise DomainError("need at least one measure")
        measures = tuple(
            m if isinstance(m, DiscreteMeasure) else DiscreteMeasure(np.asarray(m, float))
            for m in self.measures
        )
        n = measures[0].n
        if any(m.n != n for m in measures):
            raise DomainError("all measures must share the same support size")
        cost = self.cost if isinstance(self.cost, CostMatrix) else CostMatrix(self.cost)
        if cost.n != n:
            raise DomainError("cost matrix size must match the measure support")
        if not (self.gamma > 0):
            raise ParameterError("gamma must be positive")
        object.__setattr__(self, "measures", measures)
        object.__setattr__(self, "cost", cost)

    @property
    def m(self) -> int:
        return len(self.measures)

    @property
    def n(self) -> int:
        return self.measures[0].n

    @property
    def log_kernel(self) -> np.ndarray:
        return -self.cost.entries / self.gamma

    def measure_stack(self) -> np.ndarray:
        return np.stack([m.weights for m in self.measures])


@dataclass(frozen=True)
class WbDualState:
    """Stacked dual iterate (u_l, v_l), with sum_l v_l = 0 after v-updates."""

    u: np.ndarray  # (m, n)
    v: np.ndarray  # (m, n)
    iteration: int = 0

    @classmethod
    def initial(cls, m: int, n: int) -> "WbDualState":
        return cls(np.zeros((m, n)), np.zeros((m, n)))


def _log_couplings(u: np.ndarray, v: np.ndarray, logK: np.ndarray) -> np.ndarray:
    """Stacked log couplings: entry (l, i, j) = u_li + v_lj + logK_ij."""
    return u[:, :, None] + v[:, None, :] + logK[None, :, :]


def _require_positive_stack(p: np.ndarray) -> np.ndarray:
    if np.any(p <= 0):
        raise DomainError("measures must be strictly positive")
    return p


def ibp_step(state: WbDualState, problem: BarycenterProblem) -> WbDualState:
    """One exact half-step of alternating minimization of the stacked dual.

    Even iterations update the column potentials (each column marginal
    becomes the geometric mean of the current ones, preserving
    sum_l v_l = 0); odd iterations update the row potentials (each row
    marginal becomes p_l).  All reductions run in the log domain.
    """
    logK = problem.log_kernel
    p = _require_positive_stack(problem.measure_stack())
    u, v = state.u, state.v
    if state.iteration % 2 == 0:
        s = _lse(logK[None, :, :] + u[:, :, None], axis=1)  # (m, n): ln K' e^{u_l}
        v = s.mean(axis=0)[None, :] - s
        u = u.copy()
    else:
        r = _lse(logK[None, :, :] + v[:, None, :], axis=2)  # (m, n): ln K e^{v_l}
        u = np.log(p) - r
        v = v.copy()
    return WbDualState(u, v, state.iteration + 1)


def ibp_dual_value(state: WbDualState, problem: BarycenterProblem) -> float:
    """Dual value (1/m) sum_l ( 1' B(u_l, v_l) 1 - <u_l, p_l> )."""
    logB = _log_couplings(state.u, state.v, problem.log_kernel)
    masses = np.exp(_lse(logB.reshape(problem.m, -1), axis=1))
    inner = (state.u * problem.measure_stack()).sum(axis=1)
    return float((masses - inner).mean())


def _column_marginals(state: WbDualState, problem: BarycenterProblem) -> np.ndarray:
    logB = _log_couplings(state.u, state.v, problem.log_kernel)
    return np.exp(_lse(logB, axis=1))  # (m, n)


@dataclass
class IbpSolution:
    """Outcome of an IBP run: dual state, per-measure couplings, mean marginal."""

    state: WbDualState
    plans: list[np.ndarray]
    q_bar: np.ndarray


def ibp_solve(
    problem: BarycenterProblem,
    eps_prime: float,
    max_sweeps: int | None = None,
    trace: list | None = None,
    checks: list | None = None,
) -> IbpSolution:
    """Run IBP sweeps until the column marginals agree to eps_prime.

    The adaptive stopping rule needs no objective values: stop once
    (1/m) sum_l || B'(u_l, v_l) 1 - q_bar ||_1 <= eps_prime, where q_bar
    is the mean of the column marginals.

    ``trace`` (if given) collects one row per sweep with the dual value
    and the marginal spread; ``checks`` collects per-half-step exactness
    diagnostics (row-marginal match after u-updates, sum_l v_l and
    geometric-mean coincidence after v-updates).
    """
    if not (eps_prime > 0):
        raise ParameterError("eps_prime must be positive")
    p = _require_positive_stack(problem.measure_stack())
    if max_sweeps is None:
        R = problem.cost.inf_norm / problem.gamma - math.log(float(p.min()))
        max_sweeps = int(math.ceil(2.0 + 8.0 * R / eps_prime))

    state = WbDualState.initial(problem.m, problem.n)
    for sweep in range(1, max_sweeps + 1):
        state = ibp_step(state, problem)  # v half-step
        if checks is not None:
            checks.append(_ibp_check_row(state, problem, kind="v"))
        state = ibp_step(state, problem)  # u half-step
        if checks is not None:
            checks.append(_ibp_check_row(state, problem, kind="u"))

        q_l = _column_marginals(state, problem)
        q_bar = q_l.mean(axis=0)
        spread = float(np.abs(q_l - q_bar).sum(axis=1).mean())
        if trace is not None:
            trace.append(
                {
                    "sweep": sweep,
                    "iteration": state.iteration,
                    "dual_value": ibp_dual_value(state, problem),
                    "marginal_spread": spread,
                }
            )
        if spread <= eps_prime:
            logB = _log_couplings(state.u, state.v, problem.log_kernel)
            plans = [np.exp(logB[l]) for l in range(problem.m)]
            return IbpSolution(state, plans, q_bar)

    raise ConvergenceError(
        f"IBP did not reach marginal spread {eps_prime:g} in {max_sweeps} sweeps",
        trace=trace if trace is not None else [],
    )


def _ibp_check_row(state: WbDualState, problem: BarycenterProblem, kind: str) -> dict:
    logB = _log_couplings(state.u, state.v, problem.log_kernel)
    row = {"iteration": state.iteration, "kind": kind}
    if kind == "u":
        rows = np.exp(_lse(logB, axis=2))
        row["row_marginal_err"] = float(
            np.abs(rows - problem.measure_stack()).sum(axis=1).max()
        )
    else:
        cols = np.exp(_lse(logB, axis=1))
        log_geo = np.log(cols).mean(axis=0)
        row["col_coincide_err"] = float(np.abs(cols - np.exp(log_geo)).max())
        row["v_sum_err"] = float(np.abs(state.v.sum(axis=0)).max())
    return row


def barycenter_ibp(
    measures, C, eps: float, max_sweeps: int | None = None, gamma: float | None = None,
    trace: list | None = None, checks: list | None = None,
) -> tuple[np.ndarray, list[TransportPlan], SolveReport]:
    """Approximate the non-regularized barycenter through IBP.

    Schedule: gamma = eps / (4 ln n) and eps' = eps / (4 ||C||_inf).  The
    input measures are separated from zero with the mixing transform
    before solving (the log-domain updates need strict positivity), the
    returned common marginal is the mass-normalized average of the
    couplings' column marginals, and each coupling is rounded onto
    U(p_l, q_bar) with the original p_l.

    ``gamma`` overrides the schedule for regularized-mode runs.
    """
    C = C if isinstance(C, CostMatrix) else CostMatrix(as_matrix(C))
    ms = [m if isinstance(m, DiscreteMeasure) else DiscreteMeasure(np.asarray(m, float)) for m in measures]
    n = ms[0].n
    if n < 2:
        raise ParameterError("need support size n >= 2")
    if not (eps > 0):
        raise ParameterError("eps must be positive")
    if C.inf_norm == 0.0:
        # Degenerate zero cost: every feasible choice is optimal.
        q_bar = np.mean([m.weights for m in ms], axis=0)
        plans = [
            round_to_polytope(np.outer(m.weights, q_bar), m.weights, q_bar) for m in ms
        ]
        report = SolveReport(0.0, 0, 0.0, {"gamma": None, "eps": eps, "eps_prime": None})
        return q_bar, plans, report

    sched_gamma = eps / (4.0 * math.log(n))
    eps_prime = eps / (4.0 * C.inf_norm)
    used_gamma = gamma if gamma is not None else sched_gamma
    smoothed = [smooth_measure(m.weights, eps_prime / 4.0) for m in ms]
    problem = BarycenterProblem(tuple(smoothed), C, used_gamma)

    sol = ibp_solve(problem, eps_prime, max_sweeps=max_sweeps, trace=trace, checks=checks)
    masses = np.array([plan.sum() for plan in sol.plans])
    q_bar = np.sum([plan.sum(axis=0) for plan in sol.plans], axis=0) / masses.sum()

    plans = [round_to_polytope(plan, m.weights, q_bar) for plan, m in zip(sol.plans, ms)]
    objective = float(np.mean([transport_cost(p.entries, C) for p in plans]))
    report = SolveReport(
        objective=objective,
        iterations=sol.state.iteration,
        certificate=eps,
        params={
            "gamma": used_gamma,
            "eps": eps,
            "eps_prime": eps_prime,
            "gamma_override": gamma is not None,
        },
        trace=trace,
        trace_columns=IBP_TRACE_COLUMNS,
    )
    return q_bar, plans, report


# ---------------------------------------------------------------------------
# Smooth dual with the zero-sum constraint, and its accelerated solver
# ---------------------------------------------------------------------------

def _unpack_state(state) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(state, "u"):
        return np.asarray(state.u, float), np.asarray(state.v, float)
    u, v = state
    return np.asarray(u, float), np.asarray(v, float)


def wb_dual_objective(state, problem: BarycenterProblem) -> float:
    """Smooth barycenter dual (gamma/m) sum_l ( ln 1' B_l 1 - <u_l, p_l> )."""
    u, v = _unpack_state(state)
    logB = _log_couplings(u, v, problem.log_kernel)
    totals = _lse(logB.reshape(problem.m, -1), axis=1)
    inner = (u * problem.measure_stack()).sum(axis=1)
    return float(problem.gamma / problem.m * (totals - inner).sum())


def wb_dual_gradients(state, problem: BarycenterProblem) -> tuple[np.ndarray, np.ndarray]:
    """Unconstrained gradient blocks of ``wb_dual_objective``.

    grad_u[l] = (gamma/m) (normalized row marginals of B_l - p_l),
    grad_v[l] = (gamma/m) normalized column marginals of B_l.  The
    zero-sum constraint on v is handled by projection at the solver
    level, so these match central finite differences directly.
    """
    u, v = _unpack_state(state)
    logB = _log_couplings(u, v, problem.log_kernel)
    log_rows = _lse(logB, axis=2)
    log_cols = _lse(logB, axis=1)
    totals = _lse(log_rows, axis=1)
    row_m = np.exp(log_rows - totals[:, None])
    col_m = np.exp(log_cols - totals[:, None])
    scale = problem.gamma / problem.m
    return scale * (row_m - problem.measure_stack()), scale * col_m


def _project_zero_sum(g: np.ndarray) -> np.ndarray:
    """Project stacked v-gradients onto the subspace sum_l v_l = 0."""
    return g - g.mean(axis=0)[None, :]


def _normalized_couplings(u, v, logK) -> np.ndarray:
    logB = _log_couplings(u, v, logK)
    m = logB.shape[0]
    totals = _lse(logB.reshape(m, -1), axis=1)
    return np.exp(logB - totals[:, None, None])


@dataclass
class _WbAamState:
    eta_u: np.ndarray
    eta_v: np.ndarray
    zeta_u: np.ndarray
    zeta_v: np.ndarray
    A_big: float
    plans_avg: np.ndarray  # (m, n, n)
    iteration: int = 0


def _wb_aam_iterate(
    st: _WbAamState, problem: BarycenterProblem, checks: list | None = None
) -> _WbAamState:
    """Accelerated alternating minimization step on the constrained dual.

    Mirrors the transport case with two superblocks (all u vs all v); the
    v-block gradient is projected onto the zero-sum subspace, which both
    block-exact updates preserve.
    """
    from .aam import LINE_SEARCH_TOL, _golden_section, _refine_beta  # shared line search

    logK = problem.log_kernel
    p = problem.measure_stack()

    def phi(u, v):
        return wb_dual_objective((u, v), problem)

    eta = (st.eta_u, st.eta_v)
    zeta = (st.zeta_u, st.zeta_v)
    if np.array_equal(st.eta_u, st.zeta_u) and np.array_equal(st.eta_v, st.zeta_v):
        mu_u, mu_v = st.eta_u.copy(), st.eta_v.copy()
    else:
        du, dv = zeta[0] - eta[0], zeta[1] - eta[1]

        def dphi(b: float) -> float:
            gu_b, gv_b = wb_dual_gradients((eta[0] + b * du, eta[1] + b * dv), problem)
            return float((du * gu_b).sum() + (dv * gv_b).sum())

        beta = _golden_section(
            lambda b: phi(eta[0] + b * du, eta[1] + b * dv), 0.0, 1.0, LINE_SEARCH_TOL
        )
        beta = _refine_beta(dphi, beta)
        mu_u = beta * zeta[0] + (1.0 - beta) * eta[0]
        mu_v = beta * zeta[1] + (1.0 - beta) * eta[1]
    # Per-measure shift of u is free (the <u_l, p_l> term compensates).
    mu_u = mu_u - np.abs(mu_u).max(axis=1)[:, None]

    gu, gv_raw = wb_dual_gradients((mu_u, mu_v), problem)
    gv = _project_zero_sum(gv_raw)
    gu_sq = float((gu * gu).sum())
    gv_sq = float((gv * gv).sum())
    gsq = gu_sq + gv_sq
    phi_mu = phi(mu_u, mu_v)

    eta_u_new, eta_v_new = mu_u.copy(), mu_v.copy()
    if gu_sq >= gv_sq:
        r = _lse(logK[None, :, :] + mu_v[:, None, :], axis=2)
        eta_u_new = np.log(p) - r
        if checks is not None:
            logB = _log_couplings(eta_u_new, eta_v_new, logK)
            rows = np.exp(_lse(logB, axis=2))
            checks.append(
                {
                    "iteration": st.iteration + 1,
                    "kind": "u",
                    "row_marginal_err": float(np.abs(rows - p).sum(axis=1).max()),
                }
            )
    else:
        s = _lse(logK[None, :, :] + mu_u[:, :, None], axis=1)
        eta_v_new = s.mean(axis=0)[None, :] - s
        if checks is not None:
            logB = _log_couplings(eta_u_new, eta_v_new, logK)
            cols = np.exp(_lse(logB, axis=1))
            log_geo = np.log(cols).mean(axis=0)
            checks.append(
                {
                    "iteration": st.iteration + 1,
                    "kind": "v",
                    "col_coincide_err": float(np.abs(cols - np.exp(log_geo)).max()),
                    "v_sum_err": float(np.abs(eta_v_new.sum(axis=0)).max()),
                }
            )
    phi_eta_new = phi(eta_u_new, eta_v_new)

    A = st.A_big
    plans_mu = _normalized_couplings(mu_u, mu_v, logK)
    if gsq <= 0.0:
        return _WbAamState(
            eta_u_new, eta_v_new, st.zeta_u.copy(), st.zeta_v.copy(), A,
            plans_mu if A == 0.0 else st.plans_avg, st.iteration + 1,
        )

    delta = max(phi_mu - phi_eta_new, 0.0)
    a = (delta + math.sqrt(delta * delta + 2.0 * delta * A * gsq)) / gsq
    A_new = A + a
    zeta_u_new = st.zeta_u - a * gu
    zeta_v_new = st.zeta_v - a * gv
    plans_avg = plans_mu if A_new == 0.0 else (a * plans_mu + A * st.plans_avg) / A_new
    return _WbAamState(
        eta_u_new, eta_v_new, zeta_u_new, zeta_v_new, A_new, plans_avg, st.iteration + 1
    )


def accelerated_ibp(
    measures, C, eps: float, max_iter: int = 100_000, gamma: float | None = None,
    trace: list | None = None, checks: list | None = None,
) -> tuple[np.ndarray, list[TransportPlan], SolveReport]:
    """Approximate the non-regularized barycenter by the accelerated scheme.

    Schedule: gamma = eps / (2 ln n), eps' = eps / (8 ||C||_inf), measures
    smoothed by (1 - eps'/4)(p_l + eps'/(4n) 1) and renormalized.  Each
    outer check averages the normalized couplings' column marginals into
    q_bar, rounds every coupling onto U(p_check_l, q_bar), and stops once
    the averaged rounding cost gap and the duality gap both fall below
    eps / 4.
    """
    C = C if isinstance(C, CostMatrix) else CostMatrix(as_matrix(C))
    ms = [m if isinstance(m, DiscreteMeasure) else DiscreteMeasure(np.asarray(m, float)) for m in measures]
    n = ms[0].n
    if n < 2:
        raise ParameterError("need support size n >= 2")
    if not (eps > 0):
        raise ParameterError("eps must be positive")
    if C.inf_norm == 0.0:
        q_bar = np.mean([m.weights for m in ms], axis=0)
        plans = [
            round_to_polytope(np.outer(m.weights, q_bar), m.weights, q_bar) for m in ms
        ]
        report = SolveReport(0.0, 0, 0.0, {"gamma": None, "eps": eps, "eps_prime": None})
        return q_bar, plans, report

    sched_gamma = eps / (2.0 * math.log(n))
    eps_prime = eps / (8.0 * C.inf_norm)
    used_gamma = gamma if gamma is not None else sched_gamma
    smoothed = [smooth_measure(m.weights, eps_prime / 4.0) for m in ms]
    problem = BarycenterProblem(tuple(smoothed), C, used_gamma)
    m = problem.m
    p_stack = problem.measure_stack()

    st = _WbAamState(
        eta_u=np.zeros((m, n)),
        eta_v=np.zeros((m, n)),
        zeta_u=np.zeros((m, n)),
        zeta_v=np.zeros((m, n)),
        A_big=0.0,
        plans_avg=_normalized_couplings(np.zeros((m, n)), np.zeros((m, n)), problem.log_kernel),
    )
    for _ in range(max_iter):
        st = _wb_aam_iterate(st, problem, checks=checks)
        q_bar = st.plans_avg.sum(axis=1).mean(axis=0)
        rounded = [
            round_to_polytope(st.plans_avg[l], p_stack[l], q_bar) for l in range(m)
        ]
        cost_gap = float(
            np.mean(
                [
                    transport_cost(r.entries, C) - transport_cost(st.plans_avg[l], C)
                    for l, r in enumerate(rounded)
                ]
            )
        )
        primal = float(
            np.mean(
                [
                    transport_cost(st.plans_avg[l], C)
                    + problem.gamma * neg_entropy(st.plans_avg[l])
                    for l in range(m)
                ]
            )
        )
        phi_eta = wb_dual_objective((st.eta_u, st.eta_v), problem)
        gap = primal + phi_eta
        if trace is not None:
            trace.append(
                {
                    "iteration": st.iteration,
                    "dual_value": phi_eta,
                    "primal_value": primal,
                    "duality_gap": gap,
                    "rounding_cost_gap": cost_gap,
                }
            )
        if cost_gap <= eps / 4.0 and gap <= eps / 4.0:
            objective = float(np.mean([transport_cost(r.entries, C) for r in rounded]))
            report = SolveReport(
                objective=objective,
                iterations=st.iteration,
                certificate=max(gap, 0.0) + max(cost_gap, 0.0),
                params={
                    "gamma": used_gamma,
                    "eps": eps,
                    "eps_prime": eps_prime,
                    "gamma_override": gamma is not None,
                },
                trace=trace,
                trace_columns=AIBP_TRACE_COLUMNS,
            )
            return q_bar, rounded, report
    raise ConvergenceError(
        f"accelerated IBP did not stop within {max_iter} iterations",
        trace=trace if trace is not None else [],
    )


# ---------------------------------------------------------------------------
# Fenchel-Legendre transform of the regularized transport value
# ---------------------------------------------------------------------------

def fenchel_dual_ot(u, p, C, gamma: float) -> float:
    """Convex conjugate of the regularized transport value in its second
    marginal, evaluated in closed form.

    Value: gamma * sum_j p_j ln( sum_i exp((u_i - C_ji)/gamma) )
    - gamma * <p, ln p>.  Convex in u; adding c to every u_i adds exactly c.
    """
    if not (gamma > 0):
        raise ParameterError("gamma must be positive")
    u = as_weights(u)
    p = as_weights(p)
    C = as_matrix(C)
    if np.any(p <= 0):
        raise DomainError("measure must be strictly positive")
    Z = (u[None, :] - C) / gamma  # row j: (u_i - C_ji) / gamma over i
    lse_rows = _lse(Z, axis=1)
    return float(gamma * (p @ lse_rows) - gamma * (p @ np.log(p)))


def fenchel_dual_gradient(u, p, C, gamma: float) -> np.ndarray:
    """Gradient of ``fenchel_dual_ot``: a p-mixture of softmax columns.

    Component l: sum_j p_j softmax_i((u_i - C_ji)/gamma)[l].  Always a
    point of the probability simplex.
    """
    if not (gamma > 0):
        raise ParameterError("gamma must be positive")
    u = as_weights(u)
    p = as_weights(p)
    C = as_matrix(C)
    Z = (u[None, :] - C) / gamma
    soft = np.exp(Z - _lse(Z, axis=1)[:, None])  # row j: softmax over i
    return soft.T @ p

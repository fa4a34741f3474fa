"""Decentralized barycenter computation over a communication graph.

Each node holds one measure and a dual block; a round applies the
Laplacian-weighted gradient step u_i <- u_i - (1/L) sum_j W_ij q_j using
only neighbor values, then refreshes the local marginal estimate
q_i = grad of the conjugate transport value at u_i.  A synchronous
round-based simulator enforces the locality pattern and counts one
message per edge per round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CostMatrix,
    DiscreteMeasure,
    DomainError,
    ParameterError,
    ProtocolError,
    SolveReport,
    as_matrix,
    as_weights,
)
from .barycenter import fenchel_dual_gradient, fenchel_dual_ot

TRACE_COLUMNS = ("round", "consensus_error", "dual_value", "messages")


@dataclass(frozen=True)
class CommunicationGraph:
    """Connected undirected graph with its Laplacian matrix."""

    m: int
    edges: frozenset
    laplacian: np.ndarray

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> list[int]:
        return sorted(j for j in range(self.m) if j != i and self.laplacian[i, j] != 0.0)


def graph_laplacian(m: int, edges) -> CommunicationGraph:
    """Build the Laplacian (degree minus adjacency) and check connectivity."""
    if m < 1:
        raise DomainError("need at least one node")
    canonical = set()
    for i, j in edges:
        if not (0 <= i < m and 0 <= j < m):
            raise DomainError(f"edge ({i}, {j}) references a node outside 0..{m - 1}")
        if i == j:
            raise DomainError(f"self-loop at node {i}")
        canonical.add((min(i, j), max(i, j)))
    W = np.zeros((m, m))
    for i, j in canonical:
        W[i, j] = W[j, i] = -1.0
        W[i, i] += 1.0
        W[j, j] += 1.0

    # BFS connectivity; a disconnected graph has no consensus subspace.
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in range(m):
            if W[i, j] == -1.0 and j not in seen:
                seen.add(j)
                frontier.append(j)
    if len(seen) != m:
        raise DomainError("graph must be connected")
    W.flags.writeable = False
    return CommunicationGraph(m=m, edges=frozenset(canonical), laplacian=W)


def condition_number(graph: CommunicationGraph) -> float:
    """Laplacian conditioning lambda_max / lambda_min^+ (>= 1)."""
    eigs = np.linalg.eigvalsh(graph.laplacian)
    positive = eigs[eigs > 1e-12 * max(1.0, eigs.max())]
    if positive.size == 0:
        return 1.0  # single node: W = 0
    return float(eigs.max() / positive.min())


@dataclass(frozen=True)
class NodeState:
    """Per-node view: local measure, dual block, and marginal estimate."""

    node_id: int
    p_local: DiscreteMeasure
    u_local: np.ndarray
    q_local: DiscreteMeasure
    round_index: int = 0


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; ``step_L`` defaults to m lambda_max(W) / gamma."""

    gamma: float
    rounds: int
    step_L: float | None = None
    stochastic: bool = False
    seed: int = 0
    batch: int = 1

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ParameterError("gamma must be positive")
        if self.step_L is not None and not (self.step_L > 0):
            raise ParameterError("step_L must be positive")
        if self.rounds < 0:
            raise ParameterError("rounds must be nonnegative")
        if self.batch < 1:
            raise ParameterError("batch must be >= 1")


def default_step_constant(graph: CommunicationGraph, gamma: float) -> float:
    """Smoothness constant m * lambda_max(W) / gamma used for the 1/L step."""
    lam_max = float(np.linalg.eigvalsh(graph.laplacian).max())
    if lam_max == 0.0:
        return 1.0 / gamma  # single node: any positive constant, u never moves
    return graph.m * lam_max / gamma


def softmax_column(u, C, gamma: float, xi: int) -> np.ndarray:
    """Softmax over l of (u_l - C_{l, xi}) / gamma: one term of the
    conjugate gradient's p-mixture."""
    u = as_weights(u)
    C = as_matrix(C)
    z = (u - C[:, xi]) / gamma
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def stochastic_dual_gradient(u, p, C, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """One-sample estimate of the conjugate gradient.

    Draws a column index with probability p_j and returns that column's
    softmax; averaging over the draw reproduces ``fenchel_dual_gradient``
    exactly.  Each draw recomputes its O(n) softmax afresh.
    """
    p = as_weights(p)
    if np.any(p <= 0):
        raise DomainError("measure must be strictly positive")
    xi = int(rng.choice(p.size, p=p / p.sum()))
    return softmax_column(u, C, gamma, xi)


def _gradient_estimate(u, p, C, gamma, config, rng) -> np.ndarray:
    if not config.stochastic:
        return fenchel_dual_gradient(u, p, C, gamma)
    draws = [
        stochastic_dual_gradient(u, p, C, gamma, rng) for _ in range(config.batch)
    ]
    return np.mean(draws, axis=0)


def decentralized_dual_step(
    states: list[NodeState],
    graph: CommunicationGraph,
    C,
    gamma: float,
    step_L: float,
    config: SimConfig | None = None,
    rng: np.random.Generator | None = None,
    fetch=None,
) -> list[NodeState]:
    """One synchronous round of the decentralized dual gradient method.

    Every node reads only its own state and, through ``fetch(i, j)``, the
    q estimates of its graph neighbors (the only indices with a nonzero
    Laplacian entry); all reads target the previous-round snapshot.  The
    ``fetch`` hook exists so tests can log and assert the access pattern.
    """
    if len(states) != graph.m:
        raise DomainError("one state per graph node required")
    rounds = {st.round_index for st in states}
    if len(rounds) != 1:
        raise ProtocolError(f"nodes disagree on the round index: {sorted(rounds)}")
    for i, st in enumerate(states):
        if st.node_id != i:
            raise ProtocolError("states must be ordered by node id")
    if fetch is None:
        fetch = lambda i, j: states[j].q_local.weights
    if config is None:
        config = SimConfig(gamma=gamma, rounds=0)
    if rng is None:
        rng = np.random.default_rng(config.seed)

    W = graph.laplacian
    C = as_matrix(C)
    new_states = []
    for st in states:
        i = st.node_id
        mix = W[i, i] * st.q_local.weights
        for j in graph.neighbors(i):
            mix = mix + W[i, j] * np.asarray(fetch(i, j), float)
        u_new = st.u_local - mix / step_L
        q_new = _gradient_estimate(u_new, st.p_local.weights, C, gamma, config, rng)
        new_states.append(
            NodeState(
                node_id=i,
                p_local=st.p_local,
                u_local=u_new,
                q_local=DiscreteMeasure(q_new),
                round_index=st.round_index + 1,
            )
        )
    return new_states


def consensus_error(states: list[NodeState]) -> float:
    """Largest pairwise l1 distance between the nodes' marginal estimates."""
    worst = 0.0
    for a in range(len(states)):
        for b in range(a + 1, len(states)):
            d = float(np.abs(states[a].q_local.weights - states[b].q_local.weights).sum())
            worst = max(worst, d)
    return worst


def simulate_decentralized_barycenter(
    measures, C, graph: CommunicationGraph, config: SimConfig, fetch=None,
    trace: list | None = None,
) -> tuple[list[DiscreteMeasure], SolveReport]:
    """Run the round-based simulation from the zero dual start.

    Reports the per-round consensus error, the dual value
    (1/m) sum_i conjugate(u_i), and the cumulative message count
    (one message per edge per round).  Output is a pure function of
    (inputs, seed): nodes execute in id order within each round.
    """
    ms = [m if isinstance(m, DiscreteMeasure) else DiscreteMeasure(np.asarray(m, float)) for m in measures]
    if len(ms) != graph.m:
        raise DomainError("need exactly one measure per node")
    C = C if isinstance(C, CostMatrix) else CostMatrix(as_matrix(C))
    gamma = config.gamma
    step_L = config.step_L if config.step_L is not None else default_step_constant(graph, gamma)
    rng = np.random.default_rng(config.seed)

    states = [
        NodeState(
            node_id=i,
            p_local=ms[i],
            u_local=np.zeros(ms[i].n),
            q_local=DiscreteMeasure(
                _gradient_estimate(np.zeros(ms[i].n), ms[i].weights, C.entries, gamma, config, rng)
            ),
        )
        for i in range(graph.m)
    ]

    def dual_value() -> float:
        return float(
            np.mean(
                [fenchel_dual_ot(st.u_local, st.p_local.weights, C.entries, gamma) for st in states]
            )
        )

    messages = 0
    for rnd in range(1, config.rounds + 1):
        states = decentralized_dual_step(
            states, graph, C.entries, gamma, step_L, config=config, rng=rng, fetch=fetch
        )
        messages += graph.edge_count
        if trace is not None:
            trace.append(
                {
                    "round": rnd,
                    "consensus_error": consensus_error(states),
                    "dual_value": dual_value(),
                    "messages": messages,
                }
            )

    final_consensus = consensus_error(states)
    report = SolveReport(
        objective=dual_value(),
        iterations=config.rounds,
        certificate=final_consensus,
        params={
            "gamma": gamma,
            "step_L": step_L,
            "rounds": config.rounds,
            "stochastic": config.stochastic,
            "batch": config.batch,
        },
        seed=config.seed,
        trace=trace,
        trace_columns=TRACE_COLUMNS,
        extras={"messages": messages},
    )
    return [st.q_local for st in states], report

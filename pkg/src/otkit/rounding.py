"""Projection of an almost-feasible plan onto the transportation polytope.

Five steps: scale rows down to at most p, scale columns down to at most q,
then repair the remaining marginal deficits with a rank-one correction.
The output is exactly feasible and moves no more l1 mass than the input's
marginal violation.
"""

from __future__ import annotations

import numpy as np

from .core import DomainError, TransportPlan, as_matrix, as_weights


def round_to_polytope(plan, p, q) -> TransportPlan:
    """Round a nonnegative plan onto U(p, q) with the l1 guarantee.

    Args:
        plan: nonnegative n x n matrix (may violate the marginals).
        p, q: target marginals on the probability simplex.

    Returns:
        A TransportPlan with row sums exactly p and column sums exactly q
        (to 1e-12), within l1 distance ||pi 1 - p||_1 + ||pi' 1 - q||_1 of
        the input.
    """
    pi = as_matrix(plan)
    p = as_weights(p)
    q = as_weights(q)
    if pi.shape != (p.size, q.size):
        raise DomainError("plan and marginals have mismatched dimensions")
    if np.any(pi < 0):
        raise DomainError("plan entries must be nonnegative")

    row = pi.sum(axis=1)
    # min(p_i / row_i, 1) entrywise, with 0/0 := 1 (an empty row already
    # satisfies any downscaling).
    with np.errstate(divide="ignore", invalid="ignore"):
        row_scale = np.where(row > 0, np.minimum(p / np.where(row > 0, row, 1.0), 1.0), 1.0)
    F = pi * row_scale[:, None]

    col = F.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        col_scale = np.where(col > 0, np.minimum(q / np.where(col > 0, col, 1.0), 1.0), 1.0)
    F = F * col_scale[None, :]

    e_p = np.maximum(p - F.sum(axis=1), 0.0)
    e_q = np.maximum(q - F.sum(axis=0), 0.0)
    ep_mass = e_p.sum()
    eq_mass = e_q.sum()
    if ep_mass > 0.0:
        out = F + np.outer(e_p, e_q) / ep_mass
    elif eq_mass > 0.0:
        # ||e_p||_1 and ||e_q||_1 agree in exact arithmetic; this branch is
        # float dust only.  Spread the column deficit across rows
        # proportionally to p, which keeps the correction O(||e_q||_1).
        out = F + np.outer(p, e_q)
    else:
        out = F
    return TransportPlan(out, feasible_for=(p, q))

"""Invariancy-interval query at a fixed parameter value.

Solving the problem at the query point yields the dual range-space basis of
the optimal partition; the pair of auxiliary boundary problems built on that
basis then brackets the largest parameter interval on which the partition
stays put.  A bracket collapsing onto the query point (within the interval
tolerance) means the point sits in a nonlinearity interval or at a
transition point, and the caller falls through to solution tracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symlin
from .ipm import IPMSettings, solve_aux, solve_fixed
from .model import KKTPoint, ParametricSDO

INTERVAL = "interval"
POINT = "point"

#: band separating a genuine interval from solver noise around the query point
DEFAULT_INTERVAL_TOL = 1e-6


@dataclass(frozen=True)
class InvariancyResult:
    """Outcome of one invariancy query.

    alpha_inv and beta_inv are the (domain-clipped) boundary values of the
    auxiliary pair; ranks is the (rank X, rank S) pair read at the query
    point; q_n spans the dual range space used by the auxiliary problems.
    """

    eps: float
    alpha_inv: float
    beta_inv: float
    ranks: tuple[int, int]
    q_n: np.ndarray
    verdict: str
    solution: KKTPoint

    @property
    def is_interval(self) -> bool:
        return self.verdict == INTERVAL


def invariancy_interval(
    prob: ParametricSDO,
    eps: float,
    ipm_settings: IPMSettings | None = None,
    rank_tol: float = symlin.RANK_TOL,
    interval_tol: float = DEFAULT_INTERVAL_TOL,
    solution: KKTPoint | None = None,
) -> InvariancyResult:
    """Query whether the parameter value lies inside an invariancy interval.

    A precomputed solution for the query point may be passed to skip the
    interior-point solve.  Solver failures propagate as IPMFailure with the
    query value attached by the caller.
    """
    lo, hi = prob.domain
    if solution is None:
        solution = solve_fixed(prob, eps, ipm_settings)
    ranks = (
        symlin.numerical_rank(solution.X, rank_tol),
        symlin.numerical_rank(solution.S, rank_tol),
    )
    q_n = symlin.col_space_basis(solution.S, rank_tol)
    alpha = solve_aux(prob, q_n, "inf", ipm_settings)
    beta = solve_aux(prob, q_n, "sup", ipm_settings)
    alpha = float(min(max(alpha, lo), hi))
    beta = float(min(max(beta, lo), hi))
    # the query point is feasible for both senses, so the bracket contains it
    alpha = min(alpha, eps)
    beta = max(beta, eps)
    verdict = INTERVAL if (alpha < eps - interval_tol and beta > eps + interval_tol) else POINT
    return InvariancyResult(
        eps=float(eps),
        alpha_inv=alpha,
        beta_inv=beta,
        ranks=ranks,
        q_n=q_n,
        verdict=verdict,
        solution=solution,
    )

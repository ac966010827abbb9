"""Classification of sharpened singular points as transition or not.

The decision needs two ingredients at the singular parameter value: whether
the solution set through the accumulation point is isolated or
positive-dimensional, and the ranks of a maximally complementary
representative there.  Both are obtained numerically: random offsets along
the Jacobian null space are projected back onto the solution set with
Gauss-Newton (pseudo-inverse) iterations, and the surviving points serve
simultaneously as the dimension probe (all collapse back = isolated) and as
candidates for the rank comparison.  Rank pairs are confirmed by a rank
tolerance sweep; an inconsistent sweep yields an explicit unresolved verdict
instead of a guess.

When probes stall on a residual plateau, the plateau height is proportional
to the offset of the singular-parameter estimate from the true singular
value (the solution component exists exactly there), so its zero crossing
refines the estimate; probing is then repeated at the refined value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import symlin
from .model import DifferentiableMap

TRANSITION = "transition"
NON_TRANSITION = "non-transition"
UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class ClassifierSettings:
    n_probes: int = 16
    probe_offset: float = 1e-3
    probe_tol: float = 1e-8
    probe_stall_tol: float = 1e-5
    null_tol: float = 1e-6
    pinv_rcond: float = 1e-8
    max_gn_iters: int = 60
    rank_tol: float = symlin.RANK_TOL
    rank_sweep: tuple[float, ...] = (1e-5, 1e-7, 1e-9)
    feas_slack: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.n_probes < 1:
            raise ValueError("n_probes must be positive")


@dataclass
class SingularRecord:
    """One sharpened singular point with classification evidence."""

    eps_hat: float
    v_accum: np.ndarray
    left_ranks: tuple[int, int] | None = None
    right_ranks: tuple[int, int] | None = None
    classification: str = UNRESOLVED
    evidence: dict = field(default_factory=dict)

    @property
    def is_transition(self) -> bool:
        return self.classification == TRANSITION


@dataclass(frozen=True)
class ProbeOutcome:
    point: np.ndarray
    residual: float
    strict: bool
    distinct: bool
    feasible: bool


# ---------------------------------------------------------------------------
# local dimension machinery
# ---------------------------------------------------------------------------


def local_null_dim(
    map_: DifferentiableMap, v: np.ndarray, eps: float, tol: float = 1e-6
) -> int:
    """Numerical nullity of the Jacobian, an upper bound for the local dimension."""
    return symlin.null_space_basis(map_.jacobian(v, eps), tol).shape[1]


def _gauss_newton(
    map_: DifferentiableMap,
    w: np.ndarray,
    eps: float,
    settings: ClassifierSettings,
) -> tuple[np.ndarray, float]:
    """Project a point onto the solution set of F(., eps) = 0.

    Pseudo-inverse steps with a rank cutoff keep the iteration from shooting
    along near-null directions; returns the best point seen and its residual.
    """
    scale = 1.0 + float(np.linalg.norm(w))
    best_w, best_res = w, float(np.linalg.norm(map_.residual(w, eps)))
    for _ in range(settings.max_gn_iters):
        res = map_.residual(w, eps)
        norm = float(np.linalg.norm(res))
        if norm < best_res:
            best_w, best_res = w, norm
        if norm <= settings.probe_tol * scale:
            break
        jac = map_.jacobian(w, eps)
        dw = -np.linalg.pinv(jac, rcond=settings.pinv_rcond) @ res
        if not np.all(np.isfinite(dw)) or np.linalg.norm(dw) <= 1e-16 * scale:
            break
        w = w + dw
    return best_w, best_res


def probe_component(
    map_: DifferentiableMap,
    v: np.ndarray,
    eps: float,
    settings: ClassifierSettings,
    rng: np.random.Generator,
) -> list[ProbeOutcome]:
    """Project random null-space offsets of the point back onto the solution set.

    Non-convergent probes are dropped; a returned point is distinct when it
    stays farther than half the offset from the start, and strict when it
    met the convergence tolerance (as opposed to an accepted stall).
    """
    null_basis = symlin.null_space_basis(map_.jacobian(v, eps), settings.null_tol)
    k = null_basis.shape[1]
    if k == 0:
        return []
    eta = settings.probe_offset * (1.0 + float(np.linalg.norm(v)))
    scale = 1.0 + float(np.linalg.norm(v))
    outcomes: list[ProbeOutcome] = []
    for _ in range(settings.n_probes):
        coeff = rng.standard_normal(k)
        nrm = float(np.linalg.norm(coeff))
        if nrm == 0.0:
            continue
        u = null_basis @ (coeff / nrm)
        w, res = _gauss_newton(map_, v + eta * u, eps, settings)
        strict = res <= settings.probe_tol * scale
        if not strict and res > settings.probe_stall_tol * scale:
            continue
        eigs = map_.cone_eigs(w)
        feasible = eigs is None or min(eigs) >= -settings.feas_slack * scale
        outcomes.append(
            ProbeOutcome(
                point=w,
                residual=res,
                strict=strict,
                distinct=bool(np.linalg.norm(w - v) > 0.5 * eta),
                feasible=feasible,
            )
        )
    return outcomes


def effective_local_dim(outcomes: list[ProbeOutcome]) -> int | None:
    """0 when all accepted probes collapsed, >= 1 when any stayed distinct.

    None when no probe converged at all (numerically inconsistent evidence).
    """
    if not outcomes:
        return None
    return 1 if any(o.distinct for o in outcomes) else 0


def refine_singular_parameter(
    map_: DifferentiableMap,
    v: np.ndarray,
    eps: float,
    settings: ClassifierSettings,
    rng: np.random.Generator,
) -> tuple[float, dict]:
    """Refine a singular-parameter estimate from the probe residual plateau.

    On a positive-dimensional component the smallest residual reachable from
    a fixed transversal offset is proportional to the distance from the true
    singular parameter; a secant on that plateau height locates its zero far
    more accurately than the singular-value criteria that produced the
    estimate.
    """
    null_basis = symlin.null_space_basis(map_.jacobian(v, eps), settings.null_tol)
    if null_basis.shape[1] == 0:
        return eps, {"refined": False}
    eta = settings.probe_offset * (1.0 + float(np.linalg.norm(v)))
    coeff = rng.standard_normal(null_basis.shape[1])
    u = null_basis @ (coeff / np.linalg.norm(coeff))
    w0 = v + eta * u
    scale = 1.0 + float(np.linalg.norm(v))

    def floor_at(e: float) -> float:
        return _gauss_newton(map_, w0, e, settings)[1]

    f0 = floor_at(eps)
    if f0 <= settings.probe_tol * scale:
        return eps, {"refined": False, "floor": f0}
    deps_norm = max(float(np.linalg.norm(map_.deps(v, eps))), 1e-8)
    h = 4.0 * f0 / deps_norm
    candidates = [(eps, f0)]
    for e in (eps - h, eps + h):
        candidates.append((e, floor_at(e)))
    candidates.sort(key=lambda t: t[1])
    best, second = candidates[0], candidates[1]
    for _ in range(8):
        if best[1] <= settings.probe_tol * scale or second[1] == best[1]:
            break
        e_new = (best[0] * second[1] - second[0] * best[1]) / (second[1] - best[1])
        if not math.isfinite(e_new) or abs(e_new - best[0]) > 10.0 * h:
            break
        f_new = floor_at(e_new)
        if f_new >= best[1]:
            break
        best, second = (e_new, f_new), best
    return best[0], {"refined": best[0] != eps, "floor": best[1], "floor_initial": f0}


# ---------------------------------------------------------------------------
# rank evidence
# ---------------------------------------------------------------------------


def _kkt_ranks(map_: DifferentiableMap, v: np.ndarray, tol: float) -> tuple[int, int]:
    point = map_.point(v)
    return symlin.numerical_rank(point.X, tol), symlin.numerical_rank(point.S, tol)


def surrogate_max_complementary(
    map_: DifferentiableMap,
    candidates: list[np.ndarray],
    rank_tol: float = symlin.RANK_TOL,
    sweep_tols: tuple[float, ...] | None = None,
) -> tuple[np.ndarray, tuple[int, int]]:
    """Candidate of maximal rank(X) + rank(S): the generic representative.

    When sweep tolerances are given, ties in the rank sum are broken in
    favour of candidates whose rank pair is constant across the sweep;
    points drifting toward the boundary of their solution component carry
    marginal eigenvalues and lose their claim to genericity.
    """
    if not candidates:
        raise ValueError("candidate list must be nonempty")
    best = None
    best_key = (-1, -1)
    best_ranks = (-1, -1)
    for cand in candidates:
        ranks = _kkt_ranks(map_, cand, rank_tol)
        stable = 1
        if sweep_tols is not None:
            sweep = rank_sweep(map_, cand, sweep_tols)
            stable = int(all(s == sweep[0] for s in sweep))
        key = (sum(ranks), stable)
        if key > best_key:
            best, best_key, best_ranks = cand, key, ranks
    return best, best_ranks


def rank_sweep(
    map_: DifferentiableMap, v: np.ndarray, tols: tuple[float, ...]
) -> list[tuple[int, int]]:
    return [_kkt_ranks(map_, v, t) for t in tols]


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def classify(
    left_ranks: tuple[int, int] | None,
    right_ranks: tuple[int, int] | None,
    at_point_ranks: tuple[int, int],
    effective_dim: int | None,
) -> str:
    """Neighbor-rank transition rule.

    An isolated singular solution forces a transition; otherwise the point is
    a transition exactly when the two side rank pairs differ or the rank pair
    of the generic representative differs from the common side value.
    """
    if effective_dim == 0:
        return TRANSITION
    sides = [r for r in (left_ranks, right_ranks) if r is not None]
    if not sides:
        return UNRESOLVED
    if len(sides) == 2 and sides[0] != sides[1]:
        return TRANSITION
    if at_point_ranks is None:
        return UNRESOLVED
    if any(at_point_ranks != side for side in sides):
        return TRANSITION
    return NON_TRANSITION


def classify_record(
    map_: DifferentiableMap,
    record: SingularRecord,
    settings: ClassifierSettings | None = None,
) -> SingularRecord:
    """Fill in classification and evidence for one singular record."""
    settings = settings or ClassifierSettings()
    rng = np.random.default_rng(settings.seed)
    eps_hat, v = record.eps_hat, record.v_accum
    null_dim = local_null_dim(map_, v, eps_hat, settings.null_tol)
    evidence: dict = {"local_null_dim": null_dim}

    outcomes = probe_component(map_, v, eps_hat, settings, rng)
    needs_refinement = (not outcomes and null_dim > 0) or (
        outcomes and not all(o.strict for o in outcomes)
    )
    if needs_refinement:
        # stalled or dropped probes: the residual reachable near a component
        # is floored by the error of the singular-parameter estimate
        eps_ref, ref_info = refine_singular_parameter(map_, v, eps_hat, settings, rng)
        evidence.update(ref_info)
        if ref_info.get("refined"):
            v_ref, res_ref = _gauss_newton(map_, v, eps_ref, settings)
            if res_ref <= np.linalg.norm(map_.residual(v, eps_ref)):
                v = v_ref
            eps_hat = eps_ref
            record.eps_hat = eps_hat
            record.v_accum = v
            outcomes = probe_component(map_, v, eps_hat, settings, rng)

    d_eff = effective_local_dim(outcomes)
    evidence.update(
        {
            "n_probes": settings.n_probes,
            "n_converged": len(outcomes),
            "n_strict": sum(o.strict for o in outcomes),
            "n_distinct": sum(o.distinct for o in outcomes),
            "n_feasible": sum(o.feasible for o in outcomes),
            "effective_local_dim": d_eff,
        }
    )

    # a complementary pair cannot exceed rank sum n; candidates violating the
    # cap sit on spurious algebraic branches near the feasibility boundary
    n_cap = map_.point(v).n
    candidates = [v] + [
        o.point
        for o in outcomes
        if o.feasible and sum(_kkt_ranks(map_, o.point, settings.rank_tol)) <= n_cap
    ]
    surrogate, surrogate_ranks = surrogate_max_complementary(
        map_, candidates, settings.rank_tol, settings.rank_sweep
    )
    sweep = rank_sweep(map_, surrogate, settings.rank_sweep)
    sweep_consistent = all(s == sweep[0] for s in sweep)
    evidence["surrogate_ranks"] = surrogate_ranks
    evidence["rank_sweep"] = sweep
    evidence["rank_sweep_consistent"] = sweep_consistent
    evidence["accum_ranks"] = _kkt_ranks(map_, v, settings.rank_tol)

    if d_eff is None:
        label = UNRESOLVED
    else:
        at_point = surrogate_ranks if (d_eff == 0 or sweep_consistent) else None
        label = classify(record.left_ranks, record.right_ranks, at_point, d_eff)
    record.classification = label
    record.evidence = evidence
    return record

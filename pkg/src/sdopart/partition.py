"""Partition of the parameter domain into invariancy and nonlinearity intervals.

The driver sweeps outward from an initial interior point in both directions.
At the current parameter value an invariancy query either returns an
interval, in which case the sweep records it and jumps past its far
boundary, or the sweep switches to solution tracking until the next singular
point, which is sharpened, recorded and later classified.  Invariancy
boundaries strictly inside the domain are transition points outright; the
remaining singular records are classified by the local-dimension and
neighbor-rank rules.  Nonlinearity intervals are what remains of the open
domain after removing invariancy intervals and transition points.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import symlin
from .classifier import (
    TRANSITION,
    UNRESOLVED,
    ClassifierSettings,
    SingularRecord,
    classify_record,
)
from .invariancy import DEFAULT_INTERVAL_TOL, InvariancyResult, invariancy_interval
from .ipm import IPMFailure, IPMSettings, solve_fixed
from .model import KKTMap, KKTPoint, ParametricSDO, validate
from .tracker import (
    REACHED_BOUND,
    SINGULAR,
    TrackResult,
    TrackSample,
    TrackSettings,
    TrackStartError,
    track,
)

INVARIANCY = "invariancy"
NONLINEARITY = "nonlinearity"


class PartitionError(RuntimeError):
    pass


class InitialPointSingularError(PartitionError):
    """The Jacobian at the initial point is numerically singular."""


@dataclass(frozen=True)
class PartitionSettings:
    """Knobs for the whole pipeline; sub-settings are derived from these."""

    ipm: IPMSettings = IPMSettings()
    sing_threshold: float = 1e-5
    newton_tol: float = 1e-12
    newton_max_iters: int = 20
    sharpen_tol: float = 1e-10
    psd_slack: float = -1e-9
    rank_tol: float = symlin.RANK_TOL
    interval_tol: float = DEFAULT_INTERVAL_TOL
    merge_tol: float = 1e-6
    classifier: ClassifierSettings = ClassifierSettings()
    seed: int = 0
    max_legs: int = 200
    max_start_escalations: int = 8

    def track_settings(self, delta_eps: float) -> TrackSettings:
        return TrackSettings(
            delta_eps=delta_eps,
            sing_threshold=self.sing_threshold,
            newton_tol=self.newton_tol,
            newton_max_iters=self.newton_max_iters,
            sharpen_tol=self.sharpen_tol,
            psd_slack=self.psd_slack,
        )

    def with_seed(self, seed: int) -> "PartitionSettings":
        return replace(self, seed=seed, classifier=replace(self.classifier, seed=seed))


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    kind: str
    ranks: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("segment needs lo < hi")

    def contains(self, eps: float, slack: float = 0.0) -> bool:
        return self.lo - slack < eps < self.hi + slack


@dataclass
class PartitionReport:
    domain: tuple[float, float]
    eps_init: float
    delta_eps: float
    seed: int
    segments: list[Segment]
    transition_points: list[float]
    singular_records: list[SingularRecord]
    samples: list[TrackSample]
    diagnostics: dict
    certified: bool

    @property
    def invariancy_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == INVARIANCY]

    @property
    def nonlinearity_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == NONLINEARITY]


# ---------------------------------------------------------------------------
# sweep machinery
# ---------------------------------------------------------------------------


@dataclass
class _SweepState:
    intervals: list[InvariancyResult] = field(default_factory=list)
    records: list[SingularRecord] = field(default_factory=list)
    samples: list[TrackSample] = field(default_factory=list)
    diagnostics: dict = field(default_factory=lambda: {"legs": 0, "track_legs": 0, "start_escalations": 0, "corrector_retries": 0})


def _sweep(
    prob: ParametricSDO,
    kkt_map: KKTMap,
    eps_init: float,
    delta_eps: float,
    direction: float,
    settings: PartitionSettings,
    state: _SweepState,
    initial_solution: KKTPoint,
) -> None:
    lo, hi = prob.domain
    bound = hi if direction > 0 else lo
    eps = eps_init
    solution: KKTPoint | None = initial_solution
    escalation = 0
    for _ in range(settings.max_legs):
        if (eps - bound) * direction >= 0 or not prob.interior(eps):
            return
        state.diagnostics["legs"] += 1
        try:
            inv = invariancy_interval(
                prob,
                eps,
                ipm_settings=settings.ipm,
                rank_tol=settings.rank_tol,
                interval_tol=settings.interval_tol,
                solution=solution,
            )
        except IPMFailure as exc:
            raise PartitionError(f"interior-point solve failed at eps={eps}: {exc}") from exc
        solution = None
        if inv.is_interval:
            state.intervals.append(inv)
            far = inv.beta_inv if direction > 0 else inv.alpha_inv
            eps = far + direction * delta_eps
            escalation = 0
            continue
        # nonlinearity territory: track to the next singular point or bound
        try:
            result = track(
                kkt_map,
                inv.solution.to_vector(),
                eps,
                bound,
                settings.track_settings(direction * delta_eps),
            )
        except TrackStartError:
            # the restart landed inside the singular neighborhood: advance
            # again with an escalating stride and requery
            if escalation >= settings.max_start_escalations:
                raise PartitionError(
                    f"could not restart tracking near eps={eps}; the singular "
                    f"neighborhood exceeds the escalation budget"
                )
            escalation += 1
            state.diagnostics["start_escalations"] += 1
            eps = eps + direction * delta_eps * (2 ** (escalation - 1))
            continue
        escalation = 0
        state.diagnostics["track_legs"] += 1
        if result.status == SINGULAR and result.stop_reason == "corrector":
            # no clean criterion fired: retry once on a finer mesh
            state.diagnostics["corrector_retries"] += 1
            retry = track(
                kkt_map,
                inv.solution.to_vector(),
                eps,
                bound,
                settings.track_settings(direction * delta_eps / 5.0),
            )
            if retry.status == SINGULAR:
                result = retry
        state.samples.extend(result.samples)
        if result.status == REACHED_BOUND:
            return
        state.records.append(
            SingularRecord(eps_hat=float(result.eps_hat), v_accum=result.v_accum)
        )
        eps = result.eps_hat + direction * delta_eps
    raise PartitionError("sweep leg limit exceeded; the domain did not close")


@dataclass
class TrackRangeResult:
    samples: list[TrackSample]
    records: list[SingularRecord]
    reached_bound: bool


def track_range(
    prob: ParametricSDO,
    eps_init: float,
    bound: float,
    delta_eps: float,
    settings: PartitionSettings | None = None,
) -> TrackRangeResult:
    """Track from the initial point toward a bound, restarting past singular points.

    Each leg starts from a fresh interior-point solve; sharpened singular
    points are recorded (unclassified) and the mesh restarts beyond them with
    an escalating stride when the singular neighborhood is wide.
    """
    settings = settings or PartitionSettings()
    if delta_eps <= 0:
        raise ValueError("delta_eps must be positive; direction comes from the bound")
    lo, hi = prob.domain
    if not (lo <= bound <= hi):
        raise ValueError(f"bound {bound} lies outside the domain [{lo}, {hi}]")
    if bound == eps_init:
        raise ValueError("bound must differ from eps_init")
    direction = 1.0 if bound > eps_init else -1.0
    kkt_map = KKTMap(prob)
    out = TrackRangeResult(samples=[], records=[], reached_bound=False)
    eps = eps_init
    escalation = 0
    for _ in range(settings.max_legs):
        if (eps - bound) * direction >= 0:
            out.reached_bound = True
            break
        sol = solve_fixed(prob, eps, settings.ipm)
        try:
            result = track(
                kkt_map,
                sol.to_vector(),
                eps,
                bound,
                settings.track_settings(direction * delta_eps),
            )
        except TrackStartError:
            if escalation >= settings.max_start_escalations:
                raise PartitionError(f"could not restart tracking near eps={eps}")
            escalation += 1
            eps = eps + direction * delta_eps * (2 ** (escalation - 1))
            continue
        escalation = 0
        out.samples.extend(result.samples)
        if result.status == REACHED_BOUND:
            out.reached_bound = True
            break
        out.records.append(SingularRecord(eps_hat=float(result.eps_hat), v_accum=result.v_accum))
        eps = result.eps_hat + direction * delta_eps
    out.samples.sort(key=lambda s: s.eps)
    return out


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _dedupe_sorted(values: list[float], tol: float) -> list[float]:
    out: list[float] = []
    for val in sorted(values):
        if not out or abs(val - out[-1]) > tol:
            out.append(val)
    return out


def _merge_intervals(
    intervals: list[InvariancyResult], tol: float
) -> list[InvariancyResult]:
    merged: list[InvariancyResult] = []
    for inv in sorted(intervals, key=lambda r: (r.alpha_inv, r.beta_inv)):
        if merged and abs(inv.alpha_inv - merged[-1].alpha_inv) <= tol and abs(
            inv.beta_inv - merged[-1].beta_inv
        ) <= tol:
            continue
        merged.append(inv)
    return merged


def assemble_nonlinearity(
    domain: tuple[float, float],
    inv_segments: list[tuple[float, float]],
    transition_points: list[float],
    merge_tol: float = 1e-6,
    rank_lookup=None,
) -> list[Segment]:
    """Open complement of the invariancy segments and transition points.

    Raises PartitionError when the invariancy segments overlap beyond the
    merge tolerance.  rank_lookup, when given, maps an interior point of a
    segment to its (rank X, rank S) signature.
    """
    lo, hi = domain
    segs = sorted(inv_segments)
    for (a1, b1), (a2, b2) in zip(segs, segs[1:]):
        if b1 > a2 + merge_tol:
            raise PartitionError(f"invariancy segments overlap: ({a1},{b1}) and ({a2},{b2})")
    cuts = _dedupe_sorted([t for t in transition_points if lo + merge_tol < t < hi - merge_tol], merge_tol)
    out: list[Segment] = []
    cursor = lo
    for a, b in segs + [(hi, hi)]:
        gap_lo, gap_hi = cursor, min(a, hi)
        if gap_hi - gap_lo > merge_tol:
            pieces = [gap_lo] + [t for t in cuts if gap_lo + merge_tol < t < gap_hi - merge_tol] + [gap_hi]
            for plo, phi in zip(pieces, pieces[1:]):
                if phi - plo > merge_tol:
                    ranks = rank_lookup(0.5 * (plo + phi)) if rank_lookup else None
                    out.append(Segment(lo=plo, hi=phi, kind=NONLINEARITY, ranks=ranks))
        cursor = max(cursor, b)
    return out


def _ranks_of_vector(prob: ParametricSDO, v: np.ndarray, rank_tol: float) -> tuple[int, int]:
    point = KKTPoint.from_vector(v, prob.n, prob.m)
    return (
        symlin.numerical_rank(point.X, rank_tol),
        symlin.numerical_rank(point.S, rank_tol),
    )


def partition(
    prob: ParametricSDO,
    eps_init: float,
    delta_eps: float,
    settings: PartitionSettings | None = None,
) -> PartitionReport:
    """Decompose the open domain per the two-directional sweep.

    The initial point must sit strictly inside the domain with a nonsingular
    Jacobian at its solution; otherwise an InitialPointSingularError suggests
    perturbing it.
    """
    settings = settings or PartitionSettings()
    if delta_eps <= 0:
        raise ValueError("delta_eps must be positive; the sweep runs both directions")
    validate(prob)
    lo, hi = prob.domain
    if not prob.interior(eps_init):
        raise ValueError(f"eps_init {eps_init} is not interior to the domain [{lo}, {hi}]")
    t_start = time.perf_counter()
    kkt_map = KKTMap(prob)

    sol0 = solve_fixed(prob, eps_init, settings.ipm)
    jac_min_sv = symlin.min_singular_value(kkt_map.jacobian(sol0.to_vector(), eps_init))
    if jac_min_sv < settings.sing_threshold:
        raise InitialPointSingularError(
            f"the Jacobian at eps_init={eps_init} has minimum singular value "
            f"{jac_min_sv:.3e} below the threshold {settings.sing_threshold:.0e}; "
            f"perturb eps_init away from the singular point"
        )

    state = _SweepState()
    for direction in (1.0, -1.0):
        _sweep(prob, kkt_map, eps_init, delta_eps, direction, settings, state, sol0)

    intervals = _merge_intervals(state.intervals, settings.merge_tol)
    samples = sorted(state.samples, key=lambda s: s.eps)

    # side-rank evidence for the classifier
    def ranks_near(eps_query: float) -> tuple[int, int] | None:
        for inv in intervals:
            if inv.alpha_inv - settings.merge_tol < eps_query < inv.beta_inv + settings.merge_tol:
                return inv.ranks
        best = None
        best_dist = np.inf
        for smp in samples:
            dist = abs(smp.eps - eps_query)
            if dist < best_dist:
                best, best_dist = smp, dist
        if best is None:
            return None
        return _ranks_of_vector(prob, best.v, settings.rank_tol)

    records = sorted(state.records, key=lambda r: r.eps_hat)
    deduped: list[SingularRecord] = []
    for rec in records:
        if deduped and abs(rec.eps_hat - deduped[-1].eps_hat) <= settings.merge_tol:
            continue
        deduped.append(rec)
    records = deduped
    cls_settings = replace(settings.classifier, rank_tol=settings.rank_tol, seed=settings.seed)
    for rec in records:
        rec.left_ranks = ranks_near(rec.eps_hat - delta_eps)
        rec.right_ranks = ranks_near(rec.eps_hat + delta_eps)
        classify_record(kkt_map, rec, cls_settings)

    transition_points: list[float] = []
    for inv in intervals:
        if inv.alpha_inv > lo + settings.merge_tol:
            transition_points.append(inv.alpha_inv)
        if inv.beta_inv < hi - settings.merge_tol:
            transition_points.append(inv.beta_inv)
    transition_points.extend(rec.eps_hat for rec in records if rec.classification == TRANSITION)
    transition_points = _dedupe_sorted(transition_points, settings.merge_tol)

    def rank_lookup(eps_query: float) -> tuple[int, int] | None:
        inside = [s for s in samples if abs(s.eps - eps_query) < np.inf]
        if not inside:
            return None
        return ranks_near(eps_query)

    segments = [
        Segment(lo=inv.alpha_inv, hi=inv.beta_inv, kind=INVARIANCY, ranks=inv.ranks)
        for inv in intervals
    ]
    segments += assemble_nonlinearity(
        prob.domain,
        [(inv.alpha_inv, inv.beta_inv) for inv in intervals],
        transition_points,
        settings.merge_tol,
        rank_lookup,
    )
    segments.sort(key=lambda s: s.lo)

    certified = all(rec.classification != UNRESOLVED for rec in records)
    diagnostics = dict(state.diagnostics)
    diagnostics["n_intervals"] = len(intervals)
    diagnostics["n_singular_records"] = len(records)
    diagnostics["n_samples"] = len(samples)
    diagnostics["wall_time_s"] = time.perf_counter() - t_start

    return PartitionReport(
        domain=prob.domain,
        eps_init=float(eps_init),
        delta_eps=float(delta_eps),
        seed=settings.seed,
        segments=segments,
        transition_points=transition_points,
        singular_records=records,
        samples=samples,
        diagnostics=diagnostics,
        certified=certified,
    )

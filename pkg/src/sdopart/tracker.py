"""Continuation of KKT solutions along the parameter, with singularity sharpening.

The unique solution branch V(eps) of F(V, eps) = 0 obeys the implicit ODE
J(V, eps) dV/deps = -dF/deps wherever the Jacobian is nonsingular.  The
tracker advances on a fixed mesh with a classical RK4 predictor on that ODE
and, by default, a full Newton correction back onto the level set after
every step.  Tracking stops at the domain bound or when a singularity
criterion fires: small Jacobian minimum singular value, a cone eigenvalue
leaving its slack band, or corrector failure.  A fired criterion is refined
by the sharpening routine, which brackets the criterion crossing and then
extrapolates the Jacobian minimum singular value to its root; the root
rather than the threshold crossing is the singular point (the crossing sits
O(threshold) away, and worse when the singular value vanishes to second
order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import symlin
from .model import DifferentiableMap
from .symlin import SingularMatrixError

REACHED_BOUND = "reached-bound"
SINGULAR = "singular"
CORRECTOR_FAILURE = "corrector-failure"

#: floor (relative to the Jacobian scale) below which the minimum singular
#: value is roundoff-dominated and cannot drive further refinement
_MINSV_FLOOR = 1e-12


class TrackError(RuntimeError):
    pass


class TrackStartError(TrackError):
    """The starting point violates the tracking criteria."""


class CorrectorFailureError(TrackError):
    """Newton correction failed to converge on a step."""

    def __init__(self, bracket: tuple[float, float], message: str = ""):
        self.bracket = bracket
        super().__init__(message or f"corrector failed on [{bracket[0]}, {bracket[1]}]")


@dataclass(frozen=True)
class TrackSettings:
    """Mesh, singularity criteria and corrector tolerances for one track."""

    delta_eps: float
    sing_threshold: float = 1e-5
    newton_tol: float = 1e-12
    newton_max_iters: int = 20
    sharpen_tol: float = 1e-10
    psd_slack: float = -1e-9
    correct: bool = True
    max_steps: int = 500_000

    def __post_init__(self):
        if self.delta_eps == 0.0:
            raise ValueError("delta_eps must be nonzero")
        for name in ("sing_threshold", "newton_tol", "sharpen_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.newton_max_iters < 1 or self.max_steps < 1:
            raise ValueError("iteration limits must be positive")
        if self.psd_slack > 0:
            raise ValueError("psd_slack is the most negative admissible eigenvalue; it cannot be positive")


@dataclass(frozen=True)
class TrackSample:
    eps: float
    v: np.ndarray
    objective: float
    min_eig_x: float
    min_eig_s: float
    jac_min_sv: float


@dataclass
class TrackResult:
    samples: list[TrackSample]
    status: str
    eps_hat: float | None = None
    v_accum: np.ndarray | None = None
    bracket: tuple[float, float] | None = None
    approx_singular_eps: float | None = None
    stop_reason: str | None = None

    @property
    def final_eps(self) -> float:
        return self.samples[-1].eps


# ---------------------------------------------------------------------------
# predictor and corrector
# ---------------------------------------------------------------------------


def davidenko_rhs(map_: DifferentiableMap, v: np.ndarray, eps: float) -> np.ndarray:
    """Parameter derivative -J^{-1} dF/deps of the tracked solution branch."""
    return symlin.solve_dense(map_.jacobian(v, eps), -map_.deps(v, eps))


def _rk4_predict(map_: DifferentiableMap, v: np.ndarray, eps: float, d: float) -> np.ndarray:
    k1 = davidenko_rhs(map_, v, eps)
    k2 = davidenko_rhs(map_, v + 0.5 * d * k1, eps + 0.5 * d)
    k3 = davidenko_rhs(map_, v + 0.5 * d * k2, eps + 0.5 * d)
    k4 = davidenko_rhs(map_, v + d * k3, eps + d)
    return v + (d / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def newton_correct(
    map_: DifferentiableMap,
    v: np.ndarray,
    eps: float,
    tol: float,
    max_iters: int,
) -> tuple[np.ndarray, bool]:
    """Newton iteration on F(., eps) = 0; returns (best point, converged).

    On non-convergence the lowest-residual iterate seen is returned.
    """
    scale = 1.0 + float(np.linalg.norm(v))
    best_v, best_norm = v, math.inf
    for _ in range(max_iters + 1):
        res = map_.residual(v, eps)
        norm = float(np.linalg.norm(res))
        if math.isfinite(norm) and norm < best_norm:
            best_v, best_norm = v, norm
        if norm <= tol * scale:
            return v, True
        if not math.isfinite(norm) or norm > 10.0 * best_norm:
            return best_v, False
        jac = map_.jacobian(v, eps)
        try:
            dv = symlin.solve_dense(jac, -res)
        except SingularMatrixError:
            dv, *_ = np.linalg.lstsq(jac, -res, rcond=1e-13)
        if not np.all(np.isfinite(dv)):
            return best_v, False
        v = v + dv
    return best_v, best_norm <= tol * scale


def step(
    map_: DifferentiableMap,
    v: np.ndarray,
    eps: float,
    d_eps: float,
    settings: TrackSettings,
) -> np.ndarray:
    """One predictor step over [eps, eps + d_eps], corrected when enabled.

    Raises CorrectorFailureError when the Newton correction does not
    converge; a singular Jacobian inside the predictor propagates as
    SingularMatrixError.
    """
    if d_eps == 0.0:
        return v.copy()
    pred = _rk4_predict(map_, v, eps, d_eps)
    if not settings.correct:
        return pred
    corrected, ok = newton_correct(map_, pred, eps + d_eps, settings.newton_tol, settings.newton_max_iters)
    if not ok:
        raise CorrectorFailureError((eps, eps + d_eps))
    return corrected


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Criteria:
    ok: bool
    reason: str | None
    min_eig_x: float
    min_eig_s: float
    jac_min_sv: float


def _evaluate_criteria(
    map_: DifferentiableMap,
    v: np.ndarray,
    eps: float,
    settings: TrackSettings,
    check_jacobian: bool = True,
) -> _Criteria:
    jac_min_sv = symlin.min_singular_value(map_.jacobian(v, eps))
    eigs = map_.cone_eigs(v)
    ex, es = (math.nan, math.nan) if eigs is None else eigs
    if eigs is not None and min(ex, es) < settings.psd_slack:
        return _Criteria(False, "cone", ex, es, jac_min_sv)
    if check_jacobian and jac_min_sv < settings.sing_threshold:
        return _Criteria(False, "jacobian", ex, es, jac_min_sv)
    return _Criteria(True, None, ex, es, jac_min_sv)


def _make_sample(map_: DifferentiableMap, v: np.ndarray, eps: float, crit: _Criteria) -> TrackSample:
    obj = map_.objective(v, eps)
    return TrackSample(
        eps=float(eps),
        v=v.copy(),
        objective=math.nan if obj is None else float(obj),
        min_eig_x=crit.min_eig_x,
        min_eig_s=crit.min_eig_s,
        jac_min_sv=crit.jac_min_sv,
    )


# ---------------------------------------------------------------------------
# tracking loop
# ---------------------------------------------------------------------------


def track(
    map_: DifferentiableMap,
    v0: np.ndarray,
    eps0: float,
    bound: float,
    settings: TrackSettings,
) -> TrackResult:
    """Advance the solution branch from eps0 toward the bound on a fixed mesh.

    Mesh points remain strictly inside the bound.  On a fired singularity
    criterion the bracketing interval is sharpened and the result carries the
    refined parameter value together with the accumulation point of the
    branch there.
    """
    d = settings.delta_eps
    if (bound - eps0) * d <= 0:
        raise ValueError("delta_eps does not point from eps0 toward the bound")
    v = np.asarray(v0, dtype=float).copy()
    if settings.correct:
        v, ok = newton_correct(map_, v, eps0, settings.newton_tol, settings.newton_max_iters)
        if not ok:
            raise TrackStartError(f"starting point at eps={eps0} could not be corrected")
    crit = _evaluate_criteria(map_, v, eps0, settings)
    if not crit.ok:
        raise TrackStartError(
            f"starting point at eps={eps0} violates the {crit.reason} criterion "
            f"(jac min sv {crit.jac_min_sv:.3e}, min eig {min(crit.min_eig_x, crit.min_eig_s):.3e})"
        )
    samples = [_make_sample(map_, v, eps0, crit)]

    forward = d > 0
    eps = eps0
    for k in range(1, settings.max_steps + 1):
        nxt = eps0 + k * d
        if (nxt >= bound) if forward else (nxt <= bound):
            return TrackResult(samples=samples, status=REACHED_BOUND)
        try:
            v_new = step(map_, v, eps, nxt - eps, settings)
        except (SingularMatrixError, CorrectorFailureError):
            return _handle_singular(map_, samples, v, eps, nxt, settings, reason="corrector")
        crit = _evaluate_criteria(map_, v_new, nxt, settings)
        if not crit.ok:
            return _handle_singular(map_, samples, v, eps, nxt, settings, reason=crit.reason)
        samples.append(_make_sample(map_, v_new, nxt, crit))
        v, eps = v_new, nxt
    raise TrackError("step limit exceeded before reaching the bound")


def _handle_singular(
    map_: DifferentiableMap,
    samples: list[TrackSample],
    v_good: np.ndarray,
    eps_good: float,
    eps_bad: float,
    settings: TrackSettings,
    reason: str | None,
) -> TrackResult:
    # mesh-rule approximation: the criterion mesh point itself for a small
    # Jacobian singular value, the last admissible mesh point otherwise
    approx = eps_bad if reason == "jacobian" else eps_good
    if not settings.correct:
        return TrackResult(
            samples=samples,
            status=SINGULAR,
            eps_hat=None,
            v_accum=None,
            bracket=(eps_good, eps_bad),
            approx_singular_eps=approx,
            stop_reason=reason,
        )
    eps_hat, v_accum = sharpen(map_, (eps_good, eps_bad), v_good, settings)
    return TrackResult(
        samples=samples,
        status=SINGULAR,
        eps_hat=eps_hat,
        v_accum=v_accum,
        bracket=(eps_good, eps_bad),
        approx_singular_eps=approx,
        stop_reason=reason,
    )


# ---------------------------------------------------------------------------
# sharpening
# ---------------------------------------------------------------------------


def _admissible(map_: DifferentiableMap, v: np.ndarray, settings: TrackSettings) -> bool:
    eigs = map_.cone_eigs(v)
    return eigs is None or min(eigs) >= settings.psd_slack


def _fit_power_root(
    pts: list[tuple[float, float]], dirn: float, cap: float
) -> float | None:
    """Root of a power law m = c*(root - e)^q through three samples.

    Solves for the root location making the exponent inferred from the first
    sample pair agree with the one from the second pair (scalar bisection);
    this estimates singular points where the minimum singular value vanishes
    to higher than first order without knowing the order in advance.
    """
    (e1, m1), (e2, m2), (e3, m3) = pts
    if not (m1 > m2 > m3 > 0):
        return None
    p1, p2, p3 = dirn * e1, dirn * e2, dirn * e3
    pcap = dirn * cap
    if not (p1 < p2 < p3 < pcap):
        return None
    l12, l23 = math.log(m1 / m2), math.log(m2 / m3)

    def mismatch(p: float) -> float:
        return l12 / math.log((p - p1) / (p - p2)) - l23 / math.log((p - p2) / (p - p3))

    gap = p3 - p2
    lo = p3 + 1e-4 * gap
    hi = max(pcap, p3 + 1e6 * gap)
    flo, fhi = mismatch(lo), mismatch(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        return None
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        fm = mismatch(mid)
        if not math.isfinite(fm):
            return None
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return dirn * 0.5 * (lo + hi)


def sharpen(
    map_: DifferentiableMap,
    bracket: tuple[float, float],
    v_good: np.ndarray,
    settings: TrackSettings,
) -> tuple[float, np.ndarray]:
    """Refine a bracketed singularity to high accuracy.

    Bisection first narrows the admissibility boundary (corrector converges,
    cone eigenvalues within slack).  The minimum singular value of the
    Jacobian along the good side then drives a secant refinement on
    m^(1/q), with the contact order q re-estimated from consecutive
    samples; the extrapolated root is the sharpened singular point.  The
    returned accumulation point is the corrected solution nearest the root.
    """
    eps_good, eps_bad0 = float(bracket[0]), float(bracket[1])
    v = np.asarray(v_good, dtype=float).copy()
    if abs(eps_bad0 - eps_good) < settings.sharpen_tol:
        return eps_good, v
    dirn = math.copysign(1.0, eps_bad0 - eps_good)
    width0 = abs(eps_bad0 - eps_good)
    # fail_bad: hard bound from corrector failure or cone violation.
    # rebound_bad: a point where the measured singular value stopped
    # decreasing; near high-order singularities this saturates at the
    # corrector's accuracy and only steers the probing, it does not bound the
    # extrapolated root.  The Jacobian-threshold crossing itself is soft (the
    # true singular point may lie well beyond it).
    fail_bad: float | None = None
    rebound_bad: float | None = None
    # never extend past a generous multiple of the detection bracket
    far_cap = eps_bad0 + dirn * 50.0 * width0

    def minsv(vv: np.ndarray, ee: float) -> float:
        return symlin.min_singular_value(map_.jacobian(vv, ee))

    jac_scale = 1.0 + float(np.linalg.norm(map_.jacobian(v, eps_good), 2))
    floor = _MINSV_FLOOR * jac_scale
    history: list[tuple[float, float]] = [(eps_good, minsv(v, eps_good))]
    root_est: float | None = None

    def try_step(target: float) -> tuple[str, np.ndarray | None, float]:
        """Attempt a corrected step; outcome 'ok', 'soft' or 'hard'.

        A corrector stall with a tiny best residual (or a singular predictor
        stage) signals proximity to a high-order singular point, not absence
        of the branch; such outcomes only steer the probing.
        """
        try:
            pred = _rk4_predict(map_, v, eps_good, target - eps_good)
        except SingularMatrixError:
            return "soft", None, math.nan
        cand, ok = newton_correct(map_, pred, target, settings.newton_tol, settings.newton_max_iters)
        if not np.all(np.isfinite(cand)):
            return "hard", None, math.nan
        if not ok:
            res = float(np.linalg.norm(map_.residual(cand, target)))
            stall = res <= 1e-6 * (1.0 + float(np.linalg.norm(cand)))
            return ("soft" if stall else "hard"), None, math.nan
        if not _admissible(map_, cand, settings):
            return "hard", None, math.nan
        return "ok", cand, minsv(cand, target)

    def nearest_bound(*cands: float | None) -> float:
        vals = [c for c in cands if c is not None]
        return min(vals, key=lambda c: dirn * c) if vals else far_cap

    # singular values below the guard are dominated by the corrector's
    # V-accuracy and would corrupt the power-law fit
    fit_guard = 1e3 * floor

    for _ in range(200):
        probe_cap = nearest_bound(fail_bad, rebound_bad, far_cap)
        if abs(probe_cap - eps_good) < settings.sharpen_tol:
            break
        if history[-1][1] <= floor:
            break
        target = None
        fit_pts = [p for p in history if p[1] >= fit_guard][-3:]
        if len(fit_pts) >= 3:
            root = _fit_power_root(fit_pts, dirn, far_cap)
            if root is not None:
                if root_est is not None and abs(root - root_est) < 0.25 * settings.sharpen_tol:
                    root_est = root
                    break
                root_est = root
                target = history[-1][0] + 0.95 * (root - history[-1][0])
        elif len(fit_pts) == 2:
            (e1, m1), (e2, m2) = fit_pts
            if m1 > m2 > 0:
                root = e2 + m2 * (e2 - e1) / (m1 - m2)
                if (root - e2) * dirn > 0:
                    root_est = root
                    target = e2 + 0.95 * (root - e2)
        if target is None:
            # bootstrap: probe the detection point itself, then bisect
            if fail_bad is None and rebound_bad is None and len(history) == 1:
                target = eps_bad0
            else:
                target = 0.5 * (eps_good + probe_cap)
        if (target - probe_cap) * dirn >= 0:
            target = 0.5 * (eps_good + probe_cap)
        if abs(target - eps_good) < settings.sharpen_tol:
            break
        outcome, cand_v, m_t = try_step(target)
        if outcome == "hard":
            fail_bad = nearest_bound(fail_bad, target)
            continue
        if outcome == "soft" or m_t >= history[-1][1]:
            # the step or the measured singular value saturates here: either
            # the root was passed or the corrector accuracy is exhausted
            rebound_bad = nearest_bound(rebound_bad, target)
            continue
        v = cand_v
        eps_good = target
        history.append((target, m_t))

    eps_hat = eps_good
    if root_est is not None and (root_est - eps_good) * dirn >= 0:
        limit = nearest_bound(fail_bad, far_cap)
        eps_hat = float(root_est) if (root_est - limit) * dirn <= 0 else float(limit)
    # re-anchor the accumulation point at the sharpened parameter value; near
    # a high-order singularity the corrector may stall above its tolerance,
    # in which case the best-effort point is kept as the accumulation point
    v_try, _ = newton_correct(map_, v, eps_hat, settings.newton_tol, settings.newton_max_iters)
    v_acc = v
    if np.all(np.isfinite(v_try)) and _admissible(map_, v_try, settings):
        if np.linalg.norm(map_.residual(v_try, eps_hat)) <= np.linalg.norm(map_.residual(v, eps_hat)):
            v_acc = v_try
    elif not _admissible(map_, v_acc, settings):
        eps_hat = eps_good
    return float(eps_hat), v_acc

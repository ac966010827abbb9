"""Primal-dual interior-point solver for small dense conic programs.

The engine solves

    min  c_cone . u + c_free . w
    s.t. G_cone u + G_free w = h,     u in K,  w free,

where K is the product of one PSD block (in svec coordinates) and one
nonnegative-orthant block, via the homogeneous self-dual embedding with
Nesterov-Todd scaling on the PSD block and a Mehrotra predictor-corrector.
Free variables sit directly in the Newton system.  At the target sizes
(matrix order <= 6, a few dozen rows) everything is dense and the full
Newton system is assembled and LU-factorized once per iteration.

On top of the engine sit the two problem-specific entry points: solving the
parametric pair at a fixed parameter value to a (numerically) maximally
complementary point, and solving the auxiliary boundary problems that
bracket an invariancy interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from . import symlin
from .model import KKTPoint, ParametricSDO
from .symlin import smat, svec, svec_dim

OPTIMAL = "optimal"
MAX_ITERS = "max-iters"
NUMERICAL_FAILURE = "numerical-failure"
INFEASIBLE_OR_UNBOUNDED = "infeasible-or-unbounded"


class IPMFailure(RuntimeError):
    """A conic solve did not reach optimal status."""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(f"interior-point solve failed with status {status!r}" + (f": {message}" if message else ""))


@dataclass(frozen=True)
class ConeSpec:
    """Product cone: one PSD block of the given order and a nonnegative block."""

    psd_dim: int = 0
    nonneg_dim: int = 0

    def __post_init__(self):
        if self.psd_dim < 0 or self.nonneg_dim < 0:
            raise ValueError("cone dimensions must be nonnegative")
        if self.psd_dim + self.nonneg_dim < 1:
            raise ValueError("the cone must be nonempty")

    @property
    def vec_dim(self) -> int:
        return svec_dim(self.psd_dim) + self.nonneg_dim

    @property
    def barrier_degree(self) -> int:
        return self.psd_dim + self.nonneg_dim


@dataclass(frozen=True)
class ConicProgram:
    """Equality-constrained conic program over (cone variable, free variable)."""

    c_cone: np.ndarray
    c_free: np.ndarray
    G_cone: np.ndarray
    G_free: np.ndarray
    h: np.ndarray
    cones: ConeSpec

    def __post_init__(self):
        nc = self.cones.vec_dim
        rows = self.h.size
        if self.c_cone.shape != (nc,):
            raise ValueError("c_cone length does not match the cone")
        if self.G_cone.shape != (rows, nc):
            raise ValueError("G_cone shape does not match (rows, cone)")
        q = self.c_free.size
        if self.G_free.shape != (rows, q):
            raise ValueError("G_free shape does not match (rows, free)")

    @property
    def n_free(self) -> int:
        return self.c_free.size

    @property
    def n_rows(self) -> int:
        return self.h.size


@dataclass(frozen=True)
class IPMSettings:
    tol_gap: float = 1e-10
    tol_feas: float = 1e-10
    max_iters: int = 100
    init_scale: float = 1.0
    step_frac: float = 0.99

    def __post_init__(self):
        if self.tol_gap <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class IPMSolution:
    u: np.ndarray
    w: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    gap: float
    prim_res: float
    dual_res: float
    iterations: int
    tau: float
    kappa: float

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# cone helpers
# ---------------------------------------------------------------------------


def _split_cone(cones: ConeSpec, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tp = svec_dim(cones.psd_dim)
    return v[:tp], v[tp:]


def _cone_identity(cones: ConeSpec, scale: float) -> np.ndarray:
    parts = []
    if cones.psd_dim:
        parts.append(svec(np.eye(cones.psd_dim)) * scale)
    if cones.nonneg_dim:
        parts.append(np.full(cones.nonneg_dim, scale))
    return np.concatenate(parts) if parts else np.zeros(0)


def _max_psd_step(U: np.ndarray, dU: np.ndarray) -> float:
    """Largest alpha with U + alpha*dU psd, for U positive definite."""
    try:
        c, lower = cho_factor(U, lower=True)
    except np.linalg.LinAlgError:
        return 0.0
    L = np.tril(c) if lower else np.triu(c).T
    M = np.linalg.solve(L, np.linalg.solve(L, dU).T).T
    lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    if lam_min >= 0.0:
        return np.inf
    return -1.0 / lam_min


def _max_nonneg_step(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _max_step(cones: ConeSpec, u: np.ndarray, du: np.ndarray) -> float:
    up, ul = _split_cone(cones, u)
    dp, dl = _split_cone(cones, du)
    alpha = np.inf
    if cones.psd_dim:
        alpha = min(alpha, _max_psd_step(smat(up), smat(dp)))
    if cones.nonneg_dim:
        alpha = min(alpha, _max_nonneg_step(ul, dl))
    return alpha


def _nt_scaling(U: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (W^{1/2}, W^{-1/2}, V) for the NT scaling point W with WSW = U."""
    c, lower = cho_factor(U, lower=True)
    L = np.tril(c) if lower else np.triu(c).T
    M = L.T @ S @ L
    w, Q = np.linalg.eigh(0.5 * (M + M.T))
    w = np.maximum(w, np.finfo(float).tiny)
    Mir = Q @ np.diag(w**-0.5) @ Q.T  # M^{-1/2}
    W = L @ Mir @ L.T
    w2, Q2 = np.linalg.eigh(0.5 * (W + W.T))
    w2 = np.maximum(w2, np.finfo(float).tiny)
    Wp = Q2 @ np.diag(w2**0.5) @ Q2.T
    Wm = Q2 @ np.diag(w2**-0.5) @ Q2.T
    V = Wm @ U @ Wm
    return Wp, Wm, 0.5 * (V + V.T)


# ---------------------------------------------------------------------------
# the homogeneous self-dual engine
# ---------------------------------------------------------------------------


def solve_conic(cp: ConicProgram, settings: IPMSettings | None = None) -> IPMSolution:
    """Solve a conic program; statuses are reported, never raised."""
    settings = settings or IPMSettings()
    cones = cp.cones
    nc, q, M = cones.vec_dim, cp.n_free, cp.n_rows
    tp = svec_dim(cones.psd_dim)
    nu = cones.barrier_degree + 1

    u = _cone_identity(cones, settings.init_scale)
    s = u.copy()
    w = np.zeros(q)
    y = np.zeros(M)
    tau, kappa = 1.0, 1.0

    Gc, Gf, h = cp.G_cone, cp.G_free, cp.h
    cc, cf = cp.c_cone, cp.c_free
    c_norm = 1.0 + float(np.linalg.norm(np.concatenate([cc, cf])))
    h_norm = 1.0 + float(np.linalg.norm(h))

    # unknown ordering: du (nc), dw (q), dy (M), ds (nc), dtau, dkappa
    N = 2 * nc + q + M + 2
    i_u, i_w, i_y, i_s = 0, nc, nc + q, nc + q + M
    i_tau, i_kappa = 2 * nc + q + M, 2 * nc + q + M + 1

    mu0 = (u @ s + tau * kappa) / nu
    status = MAX_ITERS
    iters = 0
    best = None

    def metrics():
        x_h, w_h, y_h, s_h = u / tau, w / tau, y / tau, s / tau
        pres = np.linalg.norm(Gc @ x_h + Gf @ w_h - h) / h_norm
        dres = (
            np.linalg.norm(Gc.T @ y_h + s_h - cc) ** 2 + np.linalg.norm(Gf.T @ y_h - cf) ** 2
        ) ** 0.5 / c_norm
        pobj = cc @ x_h + cf @ w_h
        dobj = h @ y_h
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        return float(pres), float(dres), float(gap)

    for iters in range(1, settings.max_iters + 1):
        mu = (u @ s + tau * kappa) / nu
        pres, dres, gap = metrics()
        if pres <= settings.tol_feas and dres <= settings.tol_feas and gap <= settings.tol_gap:
            status = OPTIMAL
            break
        if mu <= 1e-12 * mu0 and tau <= 1e-8 * max(1.0, kappa):
            status = INFEASIBLE_OR_UNBOUNDED
            break

        # residuals of the self-dual equalities
        f1 = Gc @ u + Gf @ w - h * tau
        f2 = -Gc.T @ y + cc * tau - s
        f3 = -Gf.T @ y + cf * tau
        f4 = h @ y - cc @ u - cf @ w - kappa

        up, ul = _split_cone(cones, u)
        sp, sl = _split_cone(cones, s)

        A = np.zeros((N, N))
        # primal rows
        A[:M, i_u : i_u + nc] = Gc
        A[:M, i_w : i_w + q] = Gf
        A[:M, i_tau] = -h
        r = M
        # dual rows
        A[r : r + nc, i_y : i_y + M] = -Gc.T
        A[r : r + nc, i_s : i_s + nc] = -np.eye(nc)
        A[r : r + nc, i_tau] = cc
        r += nc
        # free-variable dual rows
        if q:
            A[r : r + q, i_y : i_y + M] = -Gf.T
            A[r : r + q, i_tau] = cf
        r += q
        # gap row
        A[r, i_u : i_u + nc] = -cc
        A[r, i_w : i_w + q] = -cf
        A[r, i_y : i_y + M] = h
        A[r, i_kappa] = -1.0
        r += 1
        # complementarity rows
        rc = r
        if cones.psd_dim:
            try:
                Wp, Wm, V = _nt_scaling(smat(up), smat(sp))
            except np.linalg.LinAlgError:
                status = NUMERICAL_FAILURE
                break
            F1 = symlin.skron_matrix(Wm, Wm)
            F2 = symlin.skron_matrix(Wp, Wp)
            VI = symlin.skron_matrix(V, np.eye(cones.psd_dim))
            A[rc : rc + tp, i_u : i_u + tp] = VI @ F1
            A[rc : rc + tp, i_s : i_s + tp] = VI @ F2
        if cones.nonneg_dim:
            nn = cones.nonneg_dim
            A[rc + tp : rc + tp + nn, i_u + tp : i_u + nc] = np.diag(sl)
            A[rc + tp : rc + tp + nn, i_s + tp : i_s + nc] = np.diag(ul)
        # tau-kappa row
        A[rc + nc, i_tau] = kappa
        A[rc + nc, i_kappa] = tau

        try:
            lu = lu_factor(A)
        except (np.linalg.LinAlgError, ValueError):
            status = NUMERICAL_FAILURE
            break

        def rhs_vec(eta, sigma, corr=None):
            rhs = np.zeros(N)
            rhs[:M] = -eta * f1
            rhs[M : M + nc] = -eta * f2
            rhs[M + nc : M + nc + q] = -eta * f3
            rhs[M + nc + q] = -eta * f4
            if cones.psd_dim:
                target = sigma * mu * np.eye(cones.psd_dim) - V @ V
                if corr is not None:
                    target = target - corr[0]
                rhs[rc : rc + tp] = svec(0.5 * (target + target.T))
            if cones.nonneg_dim:
                t_lin = sigma * mu - ul * sl
                if corr is not None:
                    t_lin = t_lin - corr[1]
                rhs[rc + tp : rc + nc] = t_lin
            t_tk = sigma * mu - tau * kappa
            if corr is not None:
                t_tk -= corr[2]
            rhs[rc + nc] = t_tk
            return rhs

        def unpack(d):
            return (
                d[i_u : i_u + nc],
                d[i_w : i_w + q],
                d[i_y : i_y + M],
                d[i_s : i_s + nc],
                d[i_tau],
                d[i_kappa],
            )

        # predictor
        d_aff = lu_solve(lu, rhs_vec(1.0, 0.0))
        du_a, dw_a, dy_a, ds_a, dtau_a, dkap_a = unpack(d_aff)
        alpha_aff = min(
            _max_step(cones, u, du_a),
            _max_step(cones, s, ds_a),
            tau / -dtau_a if dtau_a < 0 else np.inf,
            kappa / -dkap_a if dkap_a < 0 else np.inf,
            1.0,
        )
        mu_aff = (
            (u + alpha_aff * du_a) @ (s + alpha_aff * ds_a)
            + (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkap_a)
        ) / nu
        sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-8, 1.0 - 1e-8))

        # corrector cross terms in the scaled space
        corr_psd = np.zeros((cones.psd_dim, cones.psd_dim))
        if cones.psd_dim:
            du_m = Wm @ smat(du_a[:tp]) @ Wm
            ds_m = Wp @ smat(ds_a[:tp]) @ Wp
            corr_psd = 0.5 * (du_m @ ds_m + ds_m @ du_m)
        corr_lin = du_a[tp:nc] * ds_a[tp:nc] if cones.nonneg_dim else np.zeros(0)
        corr = (corr_psd, corr_lin, dtau_a * dkap_a)

        d = lu_solve(lu, rhs_vec(1.0 - sigma, sigma, corr))
        du, dw, dy, ds, dtau, dkap = unpack(d)
        if not np.all(np.isfinite(d)):
            status = NUMERICAL_FAILURE
            break

        alpha_max = min(
            _max_step(cones, u, du),
            _max_step(cones, s, ds),
            tau / -dtau if dtau < 0 else np.inf,
            kappa / -dkap if dkap < 0 else np.inf,
        )
        alpha = min(settings.step_frac * alpha_max, 1.0)
        if alpha <= 1e-12:
            status = NUMERICAL_FAILURE
            break

        u = u + alpha * du
        w = w + alpha * dw
        y = y + alpha * dy
        s = s + alpha * ds
        tau = float(tau + alpha * dtau)
        kappa = float(kappa + alpha * dkap)
        best = (u, w, y, s, tau, kappa)

    pres, dres, gap = metrics()
    return IPMSolution(
        u=u / tau,
        w=w / tau,
        y=y / tau,
        s=s / tau,
        status=status,
        gap=gap,
        prim_res=pres,
        dual_res=dres,
        iterations=iters,
        tau=tau,
        kappa=kappa,
    )


# ---------------------------------------------------------------------------
# fixed-parameter solve
# ---------------------------------------------------------------------------


def fixed_parameter_program(prob: ParametricSDO, eps: float) -> ConicProgram:
    """Cast the primal problem at a fixed parameter into engine form."""
    return ConicProgram(
        c_cone=prob.cost_svec(eps),
        c_free=np.zeros(0),
        G_cone=prob.constraint_matrix,
        G_free=np.zeros((prob.m, 0)),
        h=prob.b.astype(float),
        cones=ConeSpec(psd_dim=prob.n, nonneg_dim=0),
    )


def _newton_polish(prob: ParametricSDO, point: KKTPoint, eps: float, max_iters: int = 30) -> KKTPoint:
    """Refine an interior-point terminal iterate by Newton steps on the KKT map.

    Minimum-norm steps (rank-revealing least squares) keep the refinement
    well-behaved when the Jacobian is singular at the solution, where plain
    Newton would stall; each step then halves the remaining error along the
    degenerate direction.  Falls back to the input on non-improvement.
    """
    from .model import kkt_jacobian, kkt_residual

    v = point.to_vector()
    scale = 1.0 + float(np.linalg.norm(v))
    best_v, best_res = v, float(np.linalg.norm(kkt_residual(prob, v, eps)))
    for _ in range(max_iters):
        res = kkt_residual(prob, v, eps)
        norm = float(np.linalg.norm(res))
        if norm < best_res:
            best_v, best_res = v, norm
        if norm <= 1e-15 * scale:
            break
        jac = kkt_jacobian(prob, v, eps)
        dv, *_ = np.linalg.lstsq(jac, -res, rcond=1e-13)
        if not np.all(np.isfinite(dv)):
            break
        v = v + dv
    return KKTPoint.from_vector(best_v, prob.n, prob.m)


def solve_fixed(
    prob: ParametricSDO,
    eps: float,
    settings: IPMSettings | None = None,
    polish: bool = True,
) -> KKTPoint:
    """Solve the pair at a fixed parameter to a maximally complementary point.

    The interior-point iterates approach the relative interior of the optimal
    set; a terminal Newton refinement collapses the residual eigenvalues so
    that the rank split of X and S read with the default rank tolerance
    reproduces the exact maximal-complementarity ranks.  Non-optimal statuses
    raise IPMFailure.
    """
    lo, hi = prob.domain
    if not (lo <= eps <= hi):
        raise ValueError(f"epsilon {eps} lies outside the domain [{lo}, {hi}]")
    sol = solve_conic(fixed_parameter_program(prob, eps), settings)
    if not sol.optimal:
        raise IPMFailure(sol.status, f"fixed-parameter solve at eps={eps}")
    point = KKTPoint(x=sol.u.copy(), y=sol.y.copy(), s=sol.s.copy())
    if polish:
        point = _newton_polish(prob, point, eps)
    return point


# ---------------------------------------------------------------------------
# auxiliary boundary problems
# ---------------------------------------------------------------------------


def _compression_columns(q_n: np.ndarray) -> np.ndarray:
    """Map svec(U) for U in S^r to svec(Q U Q^T) in S^n, as a dense matrix."""
    n, r = q_n.shape
    tr = svec_dim(r)
    phi = np.empty((svec_dim(n), tr))
    basis = np.zeros(tr)
    for k in range(tr):
        basis[k] = 1.0
        bk = smat(basis)
        phi[:, k] = svec(q_n @ bk @ q_n.T)
        basis[k] = 0.0
    return phi


def aux_boundary_program(
    prob: ParametricSDO, q_n: np.ndarray, sense: str
) -> ConicProgram:
    """Engine form of one auxiliary boundary problem, domain box included.

    Cone variables: svec(U) over S^r_+ and two box slacks; free variables:
    the m dual multipliers and the parameter itself.
    """
    if sense not in ("inf", "sup"):
        raise ValueError("sense must be 'inf' or 'sup'")
    n, r = q_n.shape
    t = svec_dim(n)
    tr = svec_dim(r)
    lo, hi = prob.domain
    amat = prob.constraint_matrix
    phi = _compression_columns(q_n) if r else np.zeros((t, 0))

    rows = t + 2
    nc = tr + 2
    G_cone = np.zeros((rows, nc))
    G_cone[:t, :tr] = phi
    G_cone[t, tr] = -1.0  # eps - p_lo = lo
    G_cone[t + 1, tr + 1] = 1.0  # eps + p_hi = hi
    G_free = np.zeros((rows, prob.m + 1))
    G_free[:t, : prob.m] = amat.T
    G_free[:t, prob.m] = -svec(prob.Cbar)
    G_free[t, prob.m] = 1.0
    G_free[t + 1, prob.m] = 1.0
    h = np.concatenate([svec(prob.C), [lo, hi]])
    c_free = np.zeros(prob.m + 1)
    c_free[prob.m] = 1.0 if sense == "inf" else -1.0
    return ConicProgram(
        c_cone=np.zeros(nc),
        c_free=c_free,
        G_cone=G_cone,
        G_free=G_free,
        h=h,
        cones=ConeSpec(psd_dim=r, nonneg_dim=2),
    )


def _pinned_parameter(prob: ParametricSDO, q_n: np.ndarray, tol: float = 1e-6) -> float | None:
    """Detect the degenerate auxiliary problem whose feasible set is one point.

    The parameter values admitting a solution of sum_i y_i A_i + Q U Q' =
    C + eps*Cbar form an interval exactly when svec(Cbar) lies in the range
    of [A'; Phi]; otherwise the feasible set is the single point recovered by
    projecting the constraint onto the orthogonal complement of that range.
    """
    n = prob.n
    amat_t = prob.constraint_matrix.T
    phi = _compression_columns(q_n) if q_n.shape[1] else np.zeros((svec_dim(n), 0))
    basis_mat = np.hstack([amat_t, phi])
    qbasis, _ = np.linalg.qr(basis_mat)
    cbar = svec(prob.Cbar)
    c0 = svec(prob.C)
    cbar_perp = cbar - qbasis @ (qbasis.T @ cbar)
    if np.linalg.norm(cbar_perp) <= tol * max(1.0, np.linalg.norm(cbar)):
        return None
    c0_perp = c0 - qbasis @ (qbasis.T @ c0)
    return float(-(c0_perp @ cbar_perp) / (cbar_perp @ cbar_perp))


def solve_aux(
    prob: ParametricSDO,
    q_n: np.ndarray,
    sense: str,
    settings: IPMSettings | None = None,
) -> float:
    """Optimal parameter value of one auxiliary boundary problem.

    The optimum is restricted to the problem domain via two nonnegative box
    slacks.  When the feasible parameter set degenerates to a single point
    (no invariancy interval), that point is returned directly for either
    sense; interior-point methods are unreliable on the degenerate case.
    """
    pinned = _pinned_parameter(prob, q_n)
    if pinned is not None:
        lo, hi = prob.domain
        return float(np.clip(pinned, lo, hi))
    sol = solve_conic(aux_boundary_program(prob, q_n, sense), settings)
    if not sol.optimal:
        raise IPMFailure(sol.status, f"auxiliary boundary problem ({sense})")
    return float(sol.w[prob.m])

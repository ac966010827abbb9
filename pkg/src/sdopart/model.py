"""Problem data model and the algebraic KKT map.

A parametric problem is the conic pair

    inf  <C + eps*Cbar, X>   s.t.  <A_i, X> = b_i,  X psd
    sup  b'y                 s.t.  sum_i y_i A_i + S = C + eps*Cbar,  S psd

restricted to a bounded parameter interval.  Optimality at a fixed eps is the
square polynomial system

    F(V, eps) = ( A svec(X) - b,
                  A' y + svec(S) - svec(C + eps*Cbar),
                  0.5 svec(XS + SX) )            V = (svec X; y; svec S)

whose Jacobian carries the symmetric Kronecker blocks S (x)_s I and
X (x)_s I in the complementarity rows.  The tracker and classifier consume
this system through the small `DifferentiableMap` interface, which is also
implemented by two 2-variable polynomial toy maps used in unit tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import symlin
from .symlin import smat, svec, svec_dim


class DataValidationError(ValueError):
    """Problem data is malformed (shapes, symmetry, domain)."""


class LinearDependenceError(DataValidationError):
    """The constraint matrices are not linearly independent."""


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KKTPoint:
    """Stacked primal-dual point (svec X, y, svec S) for one (n, m) pair."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray

    @property
    def n(self) -> int:
        return symlin.smat_dim(self.x.size)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def X(self) -> np.ndarray:
        return smat(self.x)

    @property
    def S(self) -> np.ndarray:
        return smat(self.s)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, self.s])

    @staticmethod
    def from_vector(v: np.ndarray, n: int, m: int) -> "KKTPoint":
        t = svec_dim(n)
        v = np.asarray(v, dtype=float)
        if v.size != m + 2 * t:
            raise DataValidationError(
                f"vector length {v.size} does not match m + 2*t(n) = {m + 2 * t}"
            )
        return KKTPoint(x=v[:t].copy(), y=v[t : t + m].copy(), s=v[t + m :].copy())


@dataclass(frozen=True)
class ParametricSDO:
    """Immutable problem data plus a bounded parameter domain.

    Matrices are validated for near-symmetry at construction and stored
    exactly symmetrized.
    """

    n: int
    m: int
    A: tuple[np.ndarray, ...]
    b: np.ndarray
    C: np.ndarray
    Cbar: np.ndarray
    domain: tuple[float, float]
    name: str | None = None

    def __post_init__(self):
        if self.n < 1:
            raise DataValidationError("matrix order n must be positive")
        if len(self.A) != self.m or self.b.shape != (self.m,):
            raise DataValidationError("constraint count mismatch between A and b")
        mats = []
        for i, a in enumerate(self.A):
            if a.shape != (self.n, self.n):
                raise DataValidationError(f"A[{i}] has shape {a.shape}, expected {(self.n, self.n)}")
            mats.append(symlin.check_symmetric(a))
        object.__setattr__(self, "A", tuple(mats))
        for label, mat in (("C", self.C), ("Cbar", self.Cbar)):
            if mat.shape != (self.n, self.n):
                raise DataValidationError(f"{label} has shape {mat.shape}, expected {(self.n, self.n)}")
        object.__setattr__(self, "C", symlin.check_symmetric(self.C))
        object.__setattr__(self, "Cbar", symlin.check_symmetric(self.Cbar))
        lo, hi = self.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise DataValidationError("domain must be a finite interval with lo < hi")
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    @cached_property
    def constraint_matrix(self) -> np.ndarray:
        """The m-by-t(n) matrix with rows svec(A_i)."""
        return np.vstack([svec(a) for a in self.A])

    @cached_property
    def data_scale(self) -> float:
        return max(
            1.0,
            float(np.linalg.norm(self.b)),
            float(np.linalg.norm(self.C)),
            float(np.linalg.norm(self.Cbar)),
            float(np.linalg.norm(self.constraint_matrix)),
        )

    def cost_svec(self, eps: float) -> np.ndarray:
        return svec(self.C + eps * self.Cbar)

    def dim(self) -> int:
        """Size of the stacked KKT vector, m + 2*t(n)."""
        return self.m + 2 * svec_dim(self.n)

    def interior(self, eps: float, margin: float = 0.0) -> bool:
        lo, hi = self.domain
        return lo + margin < eps < hi - margin


def validate(prob: ParametricSDO, tol: float = 1e-10) -> None:
    """Check constraint-matrix row independence; symmetry is checked at init.

    Raises LinearDependenceError when the smallest singular value of the
    svec-stacked constraint matrix falls below tol times its norm.
    """
    amat = prob.constraint_matrix
    if prob.m > svec_dim(prob.n):
        raise LinearDependenceError(
            f"m = {prob.m} exceeds t(n) = {svec_dim(prob.n)}; rows cannot be independent"
        )
    scale = float(np.linalg.norm(amat, 2))
    if scale == 0.0 or symlin.min_singular_value(amat) <= tol * scale:
        raise LinearDependenceError("constraint matrices are linearly dependent")


# ---------------------------------------------------------------------------
# KKT system
# ---------------------------------------------------------------------------


def _split(prob: ParametricSDO, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = svec_dim(prob.n)
    return v[:t], v[t : t + prob.m], v[t + prob.m :]


def _as_vector(prob: ParametricSDO, point) -> np.ndarray:
    if isinstance(point, KKTPoint):
        return point.to_vector()
    v = np.asarray(point, dtype=float)
    if v.shape != (prob.dim(),):
        raise DataValidationError(f"KKT vector has shape {v.shape}, expected ({prob.dim()},)")
    return v


def kkt_residual(prob: ParametricSDO, point, eps: float) -> np.ndarray:
    """Stacked residual (primal, dual, symmetrized complementarity)."""
    v = _as_vector(prob, point)
    x, y, s = _split(prob, v)
    amat = prob.constraint_matrix
    X, S = smat(x), smat(s)
    top = amat @ x - prob.b
    mid = amat.T @ y + s - prob.cost_svec(eps)
    bot = 0.5 * svec(X @ S + S @ X)
    return np.concatenate([top, mid, bot])


def kkt_jacobian(prob: ParametricSDO, point, eps: float) -> np.ndarray:
    """Block Jacobian [[A,0,0],[0,A',I],[S(x)_s I,0,X(x)_s I]] of the KKT map."""
    v = _as_vector(prob, point)
    x, _, s = _split(prob, v)
    amat = prob.constraint_matrix
    t = svec_dim(prob.n)
    m = prob.m
    eye_n = np.eye(prob.n)
    jac = np.zeros((m + 2 * t, m + 2 * t))
    jac[:m, :t] = amat
    jac[m : m + t, t : t + m] = amat.T
    jac[m : m + t, t + m :] = np.eye(t)
    jac[m + t :, :t] = symlin.skron_matrix(smat(s), eye_n)
    jac[m + t :, t + m :] = symlin.skron_matrix(smat(x), eye_n)
    return jac


def deps(prob: ParametricSDO) -> np.ndarray:
    """Constant parameter derivative (0, -svec(Cbar), 0) of the KKT map."""
    t = svec_dim(prob.n)
    res = np.zeros(prob.dim())
    res[prob.m : prob.m + t] = -svec(prob.Cbar)
    return res


def objective_value(prob: ParametricSDO, point, eps: float) -> float:
    """Primal objective trace((C + eps*Cbar) X)."""
    v = _as_vector(prob, point)
    x, _, _ = _split(prob, v)
    return float(prob.cost_svec(eps) @ x)


def dual_objective_value(prob: ParametricSDO, point) -> float:
    v = _as_vector(prob, point)
    _, y, _ = _split(prob, v)
    return float(prob.b @ y)


# ---------------------------------------------------------------------------
# differentiable-map interface
# ---------------------------------------------------------------------------


class DifferentiableMap:
    """Square smooth system F(v, eps) = 0 with explicit Jacobian.

    Implementations expose `dim`, `residual`, `jacobian` and `deps`; conic
    maps additionally report cone eigenvalues and an objective so the tracker
    can apply feasibility criteria and log the optimal value.
    """

    dim: int

    def residual(self, v: np.ndarray, eps: float) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, v: np.ndarray, eps: float) -> np.ndarray:
        raise NotImplementedError

    def deps(self, v: np.ndarray, eps: float) -> np.ndarray:
        raise NotImplementedError

    def cone_eigs(self, v: np.ndarray) -> tuple[float, float] | None:
        """Smallest eigenvalues of the primal and dual matrix blocks, if any."""
        return None

    def objective(self, v: np.ndarray, eps: float) -> float | None:
        return None


class KKTMap(DifferentiableMap):
    """DifferentiableMap view of the KKT system of a ParametricSDO."""

    def __init__(self, prob: ParametricSDO):
        self.prob = prob
        self.dim = prob.dim()
        self._deps = deps(prob)

    def residual(self, v: np.ndarray, eps: float) -> np.ndarray:
        return kkt_residual(self.prob, v, eps)

    def jacobian(self, v: np.ndarray, eps: float) -> np.ndarray:
        return kkt_jacobian(self.prob, v, eps)

    def deps(self, v: np.ndarray, eps: float) -> np.ndarray:
        return self._deps

    def cone_eigs(self, v: np.ndarray) -> tuple[float, float]:
        x, _, s = _split(self.prob, np.asarray(v, dtype=float))
        wx, _ = symlin.eig_sym(smat(x))
        ws, _ = symlin.eig_sym(smat(s))
        return float(wx[0]), float(ws[0])

    def objective(self, v: np.ndarray, eps: float) -> float:
        return objective_value(self.prob, v, eps)

    def point(self, v: np.ndarray) -> KKTPoint:
        return KKTPoint.from_vector(v, self.prob.n, self.prob.m)


# ---------------------------------------------------------------------------
# builtin problems
# ---------------------------------------------------------------------------


def _e(n: int, entries: dict[tuple[int, int], float]) -> np.ndarray:
    """Symmetric matrix from an upper-triangle entry dictionary."""
    m = np.zeros((n, n))
    for (i, j), val in entries.items():
        m[i, j] = val
        m[j, i] = val
    return m


def _elliptope() -> ParametricSDO:
    # Correlation-matrix feasible set in S^3; the objective direction rotates
    # with the parameter.  The optimum traces a rank-2 extreme point between
    # two rank-1 vertices.
    a = (_e(3, {(0, 0): 1}), _e(3, {(1, 1): 1}), _e(3, {(2, 2): 1}))
    c = _e(3, {(0, 1): -1, (0, 2): 1, (1, 2): -1})
    cbar = _e(3, {(0, 1): 2, (0, 2): -2})
    return ParametricSDO(
        n=3, m=3, A=a, b=np.ones(3), C=c, Cbar=cbar, domain=(-1.0, 2.0), name="elliptope"
    )


def _elliptope_cut() -> ParametricSDO:
    # Same elliptope with the halfspace x + y + z <= 1 appended; the slack
    # lives on the fourth diagonal entry, decoupled from the 3x3 block.
    a = (
        _e(4, {(0, 0): 1}),
        _e(4, {(1, 1): 1}),
        _e(4, {(2, 2): 1}),
        _e(4, {(0, 3): 1}),
        _e(4, {(1, 3): 1}),
        _e(4, {(2, 3): 1}),
        _e(4, {(0, 1): 0.5, (0, 2): 0.5, (1, 2): 0.5, (3, 3): 1}),
    )
    b = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    c = _e(4, {(0, 1): -1, (0, 2): 1, (1, 2): -1})
    cbar = _e(4, {(0, 1): 2, (0, 2): -2})
    return ParametricSDO(
        n=4, m=7, A=a, b=b, C=c, Cbar=cbar, domain=(-1.0, 2.0), name="elliptope-cut"
    )


def _circle_line() -> ParametricSDO:
    # Two decoupled blocks: a disk x1^2 + x2^2 <= 1 and the wedge
    # x2 >= |x1 - 1|; the optimum slides along the circle between two corner
    # points where it sticks.
    a = (
        _e(5, {(0, 0): 1}),
        _e(5, {(1, 1): 1}),
        _e(5, {(2, 2): 1}),
        _e(5, {(1, 2): 0.5}),
        _e(5, {(0, 3): 1}),
        _e(5, {(0, 4): 1}),
        _e(5, {(1, 3): 1}),
        _e(5, {(1, 4): 1}),
        _e(5, {(2, 3): 1}),
        _e(5, {(2, 4): 1}),
        _e(5, {(3, 3): 1, (0, 2): -0.5}),
        _e(5, {(4, 4): 1, (0, 2): -0.5}),
        _e(5, {(3, 4): 0.5, (0, 1): -0.5}),
    )
    b = np.zeros(13)
    b[:3] = 1.0
    b[12] = -1.0
    c = _e(5, {(0, 2): -1})
    cbar = _e(5, {(0, 1): -1, (0, 2): 1})
    return ParametricSDO(
        n=5, m=13, A=a, b=b, C=c, Cbar=cbar, domain=(-0.25, 1.25), name="circle-line"
    )


def _ellipse_circle() -> ParametricSDO:
    # A disk and an ellipse sharing the variables (x1, x2); the two boundary
    # curves touch at (0, -1), where the dual optimal set degenerates.
    a = (
        _e(6, {(0, 0): 1}),
        _e(6, {(1, 1): 1}),
        _e(6, {(2, 2): 1}),
        _e(6, {(1, 2): 0.5}),
        _e(6, {(3, 3): 1}),
        _e(6, {(4, 4): 1}),
        _e(6, {(5, 5): 1}),
        _e(6, {(4, 5): 0.5}),
        _e(6, {(0, 3): 1}),
        _e(6, {(0, 4): 1}),
        _e(6, {(0, 5): 1}),
        _e(6, {(1, 3): 1}),
        _e(6, {(1, 4): 1}),
        _e(6, {(1, 5): 1}),
        _e(6, {(2, 3): 1}),
        _e(6, {(2, 4): 1}),
        _e(6, {(2, 5): 1}),
        _e(6, {(3, 4): 0.5, (0, 1): -0.25}),
        _e(6, {(3, 5): 0.5, (0, 2): -0.5}),
    )
    b = np.zeros(19)
    b[:3] = 1.0
    b[4:7] = 1.0
    c = _e(6, {(0, 2): 0.5})
    cbar = _e(6, {(0, 1): 0.5, (0, 2): -0.5})
    return ParametricSDO(
        n=6, m=19, A=a, b=b, C=c, Cbar=cbar, domain=(-1.0, 1.5), name="ellipse-circle"
    )


_BUILTINS = {
    "elliptope": _elliptope,
    "elliptope-cut": _elliptope_cut,
    "circle-line": _circle_line,
    "ellipse-circle": _ellipse_circle,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin(name: str) -> ParametricSDO:
    """Construct one of the bundled example problems by name."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin problem {name!r}; choose from {BUILTIN_NAMES}") from None
    prob = factory()
    validate(prob)
    return prob


# ---------------------------------------------------------------------------
# closed-form reference solutions for the elliptope family
# ---------------------------------------------------------------------------


def elliptope_solution(eps: float) -> KKTPoint:
    """Strictly complementary optimal point of the elliptope problem.

    Valid on the open interval (-1/2, 3/2) where the optimal X has rank 2.
    """
    a = 0.5 - eps
    X = np.array(
        [
            [1.0, a, -a],
            [a, 1.0, 1.0 - 2.0 * a * a],
            [-a, 1.0 - 2.0 * a * a, 1.0],
        ]
    )
    y = np.array([-((2 * eps - 1) ** 2), -1.0, -1.0])
    q = 2 * eps - 1
    S = np.array([[q * q, q, -q], [q, 1.0, -1.0], [-q, -1.0, 1.0]])
    return KKTPoint(x=svec(X), y=y, s=svec(S))


def elliptope_cut_solution(eps: float) -> KKTPoint:
    """Strictly complementary optimal point of the cut problem.

    Valid on (-1/2, 3/2) away from eps = 1/2, where the Jacobian is singular.
    """
    base = elliptope_solution(eps)
    X = np.zeros((4, 4))
    X[:3, :3] = base.X
    X[3, 3] = 2.0 * (eps - 0.5) ** 2
    S = np.zeros((4, 4))
    S[:3, :3] = base.S
    y = np.zeros(7)
    y[:3] = base.y
    return KKTPoint(x=svec(X), y=y, s=svec(S))


# ---------------------------------------------------------------------------
# polynomial toy maps
# ---------------------------------------------------------------------------


class _LocalDimDemoMap(DifferentiableMap):
    """(x1^2 + x2^2 - eps, (x1^2 + x2^2 - 1) x1).

    At eps = 0 the solution set is the isolated origin; at eps = 1 it contains
    the whole unit circle.
    """

    dim = 2

    def residual(self, v, eps):
        x1, x2 = v
        r = x1 * x1 + x2 * x2
        return np.array([r - eps, (r - 1.0) * x1])

    def jacobian(self, v, eps):
        x1, x2 = v
        return np.array(
            [
                [2 * x1, 2 * x2],
                [3 * x1 * x1 + x2 * x2 - 1.0, 2 * x1 * x2],
            ]
        )

    def deps(self, v, eps):
        return np.array([-1.0, 0.0])


class _CircleIsolatedMap(DifferentiableMap):
    """((x1^2 + x2^2 - 1)(x1 - x2), (x1^2 + x2^2 - 1)(x1 - eps)).

    Solutions split into the unit circle and the isolated point (eps, eps);
    the isolated branch has a nonsingular Jacobian except at eps^2 = 1/2.
    """

    dim = 2

    def residual(self, v, eps):
        x1, x2 = v
        r = x1 * x1 + x2 * x2 - 1.0
        return np.array([r * (x1 - x2), r * (x1 - eps)])

    def jacobian(self, v, eps):
        x1, x2 = v
        r = x1 * x1 + x2 * x2 - 1.0
        return np.array(
            [
                [2 * x1 * (x1 - x2) + r, 2 * x2 * (x1 - x2) - r],
                [2 * x1 * (x1 - eps) + r, 2 * x2 * (x1 - eps)],
            ]
        )

    def deps(self, v, eps):
        x1, x2 = v
        r = x1 * x1 + x2 * x2 - 1.0
        return np.array([0.0, -r])


_TOY_MAPS = {
    "local-dim-demo": _LocalDimDemoMap,
    "circle-isolated": _CircleIsolatedMap,
}

TOY_MAP_NAMES = tuple(sorted(_TOY_MAPS))


def toy_map(name: str) -> DifferentiableMap:
    """Construct one of the 2-variable polynomial test maps by name."""
    try:
        cls = _TOY_MAPS[name]
    except KeyError:
        raise KeyError(f"unknown toy map {name!r}; choose from {TOY_MAP_NAMES}") from None
    return cls()

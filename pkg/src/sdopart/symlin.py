"""Dense symmetric linear algebra kernel.

Everything here operates on small dense matrices (the target problems have
matrix order n <= 6), so each routine favours clarity and LAPACK-grade
accuracy over scalability.  The svec/smat pair is the isometric
vectorization of symmetric matrices: the upper triangle is stacked row by
row with off-diagonal entries scaled by sqrt(2), so that the Euclidean inner
product of two svec vectors equals the trace inner product of the matrices.
"""

from __future__ import annotations

import numpy as np

#: Default relative tolerance for numerical rank decisions.  Sits between the
#: interior-point terminal accuracy (~1e-10) and accumulated tracking error.
RANK_TOL = 1e-7

_SQRT2 = np.sqrt(2.0)


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a dense solve meets a numerically singular matrix."""


class NotPositiveSemidefiniteError(ValueError):
    """Raised when an allegedly PSD matrix has a clearly negative eigenvalue."""


def svec_dim(n: int) -> int:
    """Length of the svec image of an n-by-n symmetric matrix."""
    return n * (n + 1) // 2


def smat_dim(t: int) -> int:
    """Matrix order n with n*(n+1)/2 == t; raises if t is not triangular."""
    n = int((np.sqrt(8 * t + 1) - 1) / 2 + 0.5)
    if svec_dim(n) != t:
        raise ValueError(f"length {t} is not of the form n*(n+1)/2")
    return n


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Exactly symmetric part 0.5*(M + M^T)."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def check_symmetric(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Validate near-symmetry and return the exactly symmetrized matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return symmetrize(m)


def svec(m: np.ndarray) -> np.ndarray:
    """Isometric vectorization: row-major upper triangle, off-diagonals * sqrt(2)."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    iu, ju = np.triu_indices(n)
    v = m[iu, ju].copy()
    v[iu != ju] *= _SQRT2
    return v


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of svec; raises ValueError on non-triangular length."""
    v = np.asarray(v, dtype=float)
    n = smat_dim(v.size)
    m = np.zeros((n, n))
    iu, ju = np.triu_indices(n)
    vals = v.copy()
    vals[iu != ju] /= _SQRT2
    m[iu, ju] = vals
    m[ju, iu] = vals
    return m


def skron_apply(k1: np.ndarray, k2: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Apply the symmetric Kronecker product of (k1, k2) to a symmetric h.

    Returns 0.5 * svec(k2 @ h @ k1.T + k1 @ h @ k2.T).
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    if k1.shape != (n, n) or k2.shape != (n, n) or h.shape != (n, n):
        raise ValueError("skron_apply requires three n-by-n matrices")
    return 0.5 * svec(k2 @ h @ k1.T + k1 @ h @ k2.T)


def skron_matrix(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Materialize the symmetric Kronecker product as a t(n)-by-t(n) matrix.

    Column k is the image of the k-th orthonormal symmetric basis element, so
    skron_matrix(k1, k2) @ svec(h) == skron_apply(k1, k2, h) for symmetric h.
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    n = k1.shape[0]
    if k1.shape != (n, n) or k2.shape != (n, n):
        raise ValueError("skron_matrix requires two n-by-n matrices")
    t = svec_dim(n)
    out = np.empty((t, t))
    basis = np.zeros(t)
    for k in range(t):
        basis[k] = 1.0
        out[:, k] = skron_apply(k1, k2, smat(basis))
        basis[k] = 0.0
    return out


def eig_sym(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    w, q = np.linalg.eigh(symmetrize(m))
    return w, q


def numerical_rank(m: np.ndarray, tol: float = RANK_TOL) -> int:
    """Count of eigenvalues with |lambda| > tol * max(1, ||M||_2)."""
    if tol <= 0:
        raise ValueError("rank tolerance must be positive")
    w, _ = eig_sym(m)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    return int(np.count_nonzero(np.abs(w) > tol * scale))


def col_space_basis(m: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of a PSD matrix.

    Columns are the eigenvectors with lambda > tol * max(1, ||M||_2).  An
    eigenvalue below -tol * max(1, ||M||_2) means the input is not PSD.
    """
    w, q = eig_sym(m)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w[0] < -tol * scale:
        raise NotPositiveSemidefiniteError(
            f"matrix has eigenvalue {w[0]:.3e} below the PSD slack"
        )
    keep = w > tol * scale
    return q[:, keep]


def solve_dense(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a square dense system, refusing numerically singular matrices."""
    a = np.asarray(a, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or s[-1] < 1e-14 * s[0]:
        raise SingularMatrixError(
            f"matrix numerically singular (min/max singular value {s[-1]:.3e}/{s[0]:.3e})"
        )
    return np.linalg.solve(a, rhs)


def min_singular_value(a: np.ndarray) -> float:
    """Smallest singular value of a (not necessarily square) matrix."""
    s = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    return float(s[-1])


def null_space_basis(a: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of the numerical null space of a.

    Basis vectors u satisfy ||A u|| <= tol * ||A||_2; the zero matrix yields
    the full identity basis.
    """
    a = np.asarray(a, dtype=float)
    ncols = a.shape[1]
    _, s, vt = np.linalg.svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(ncols)
    rank = int(np.count_nonzero(s > tol * s[0]))
    return vt[rank:].T.copy()

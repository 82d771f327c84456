"""Dense matrix kernels: SVD, singular-value shrinkage, norms.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`check_matrix` is the
single validation entry point (finite entries, two dimensions, at least one
row and column).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "ConvergenceError",
    "SvdFactors",
    "check_matrix",
    "svd",
    "soft_threshold_svd",
    "shrink_factors",
    "operator_norm",
    "frobenius_mse",
    "nuclear_norm",
    "numerical_rank",
]


class ConvergenceError(RuntimeError):
    """An iterative kernel stopped without meeting its tolerance."""

    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


def check_matrix(A, name: str = "A") -> np.ndarray:
    """Return ``A`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(A, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U @ diag(singular_values) @ V.T`` with ``r = min(n, p)``."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return numerical_rank(self.singular_values)

    def reconstruct(self, values: np.ndarray | None = None) -> np.ndarray:
        s = self.singular_values if values is None else values
        keep = s > 0
        return (self.U[:, keep] * s[keep]) @ self.V[:, keep].T


def numerical_rank(singular_values, rtol: float = 1e-10) -> int:
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def svd(A, method: str = "lapack", max_sweeps: int = 60) -> SvdFactors:
    """Thin singular value decomposition.

    Parameters
    ----------
    A : array_like, shape (n, p)
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls the divide-and-conquer driver and falls back to
        the QR-iteration driver if it fails. ``"jacobi"`` runs one-sided
        (Hestenes) Jacobi rotations, at most ``max_sweeps`` sweeps.

    Returns
    -------
    SvdFactors
        ``U`` (n, r), non-increasing ``singular_values`` (r,), ``V`` (p, r).

    Raises
    ------
    ConvergenceError
        If the chosen method does not converge.
    """
    A = check_matrix(A)
    if method == "lapack":
        return _svd_lapack(A)
    if method == "jacobi":
        return _svd_jacobi(A, max_sweeps)
    raise ValueError(f"unknown SVD method {method!r}")


def _svd_lapack(A: np.ndarray) -> SvdFactors:
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            # LAPACK caps its own QR sweeps at 6*min(n, p) per singular value.
            raise ConvergenceError(
                f"LAPACK gesdd and gesvd both failed: {exc}", 6 * min(A.shape)
            ) from exc
    return SvdFactors(U, s, Vt.T)


def _svd_jacobi(A: np.ndarray, max_sweeps: int) -> SvdFactors:
    transpose = A.shape[0] < A.shape[1]
    W = (A.T if transpose else A).copy()
    m, r = W.shape
    V = np.eye(r)
    eps = np.finfo(float).eps
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(r - 1):
            for j in range(i + 1, r):
                wi, wj = W[:, i], W[:, j]
                alpha = wi @ wi
                beta = wj @ wj
                gamma = wi @ wj
                if abs(gamma) <= eps * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                wi_new = c * wi - s * wj
                W[:, j] = s * wi + c * wj
                W[:, i] = wi_new
                vi = V[:, i].copy()
                V[:, i] = c * vi - s * V[:, j]
                V[:, j] = s * vi + c * V[:, j]
        if not rotated:
            break
    else:
        raise ConvergenceError("one-sided Jacobi SVD did not converge", max_sweeps)

    sv = np.linalg.norm(W, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, W, V = sv[order], W[:, order], V[:, order]
    tiny = sv <= eps * max(sv[0], np.finfo(float).tiny) * max(m, r)
    U = np.zeros_like(W)
    U[:, ~tiny] = W[:, ~tiny] / sv[~tiny]
    sv = np.where(tiny, 0.0, sv)
    if tiny.any():
        U = _complete_orthonormal(U, ~tiny)
    if transpose:
        return SvdFactors(V, sv, U)
    return SvdFactors(U, sv, V)


def _complete_orthonormal(U: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace the columns of ``U`` outside ``good`` by an orthonormal completion."""
    k = int(good.sum())
    Q, _ = np.linalg.qr(np.hstack([U[:, good], np.eye(U.shape[0])]), mode="reduced")
    out = U.copy()
    out[:, ~good] = Q[:, k : k + int((~good).sum())]
    return out


def shrink_factors(factors: SvdFactors, tau: float) -> np.ndarray:
    """Matrix ``sum_j (s_j - tau)_+ u_j v_j^T`` from precomputed factors."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    return factors.reconstruct(np.maximum(factors.singular_values - tau, 0.0))


def soft_threshold_svd(A, tau: float) -> np.ndarray:
    """Proximal map of ``tau * ||.||_*``: shrink every singular value by ``tau``."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    return shrink_factors(svd(A), tau)


def operator_norm(A, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``A.T @ A``.

    The start vector is the normalized all-ones vector. If it is orthogonal
    to the row space of ``A`` the iteration restarts from the standard basis
    vector of the column with the largest norm. Iteration stops once the
    eigen-residual ``||B x - rho x||`` of the Rayleigh quotient ``rho`` drops
    below ``tol * rho``, which bounds the relative error of the returned
    value by ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``; ``iterations`` holds
        the length of the iterate history.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    A = check_matrix(A)
    p = A.shape[1]
    x = np.full(p, 1.0 / np.sqrt(p))
    Ax = A @ x
    if not np.any(Ax):
        col_norms = np.einsum("ij,ij->j", A, A)
        if not np.any(col_norms):
            return 0.0
        x = np.zeros(p)
        x[int(np.argmax(col_norms))] = 1.0
        Ax = A @ x
    history = 0
    for history in range(1, max_iter + 1):
        Bx = A.T @ Ax
        rho = Ax @ Ax
        resid = np.linalg.norm(Bx - rho * x)
        if resid <= tol * rho:
            return float(np.sqrt(rho))
        x = Bx / np.linalg.norm(Bx)
        Ax = A @ x
    raise ConvergenceError("power iteration did not reach tolerance", history)


def frobenius_mse(A, B) -> float:
    """Mean squared entrywise difference ``||A - B||_F^2 / (n p)``."""
    A = check_matrix(A, "A")
    B = check_matrix(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    D = A - B
    return float(np.einsum("ij,ij->", D, D) / D.size)


def nuclear_norm(A) -> float:
    return float(np.sum(svd(A).singular_values))

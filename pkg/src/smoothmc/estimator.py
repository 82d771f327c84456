"""Nuclear-norm matrix completion under uniform sampling.

The estimator minimizes

    (1/np) ||M||_F^2 - <(2/N) sum_t y_t X_t, M> + lam ||M||_*

whose unique minimizer is the singular-value soft-thresholding of the
rescaled observation matrix ``R = (np/N) sum_t y_t X_t`` at level
``lam * n * p / 2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .linalg import SvdFactors, check_matrix, frobenius_mse, shrink_factors, svd
from .sampling import ObservationSet, build_R, observations_from_masked

__all__ = [
    "CompletionResult",
    "LambdaGrid",
    "threshold_for",
    "complete",
    "complete_from_factors",
    "objective_value",
    "theoretical_lambda",
    "default_grid",
    "oracle_select",
    "oracle_path",
    "SVTCompleter",
    "OracleSVTCompleter",
]


@dataclass
class CompletionResult:
    m_hat: np.ndarray
    lam: float
    spectrum: np.ndarray
    effective_rank: int
    mse: float | None = None

    def to_json(self) -> dict:
        out = {"lambda": self.lam, "effective_rank": self.effective_rank,
               "spectrum": [float(s) for s in self.spectrum]}
        if self.mse is not None:
            out["mse"] = self.mse
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing positive regularization levels."""

    values: tuple = field(default=())

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("lambda grid is empty")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ValueError("lambda grid values must be positive and finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("lambda grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @classmethod
    def logspace(cls, lo: float, hi: float, num: int) -> "LambdaGrid":
        if num == 1:
            return cls((lo,))
        return cls(tuple(np.geomspace(lo, hi, num)))


def threshold_for(lam: float, n: int, p: int) -> float:
    return lam * n * p / 2.0


def complete_from_factors(factors: SvdFactors, lam: float, n: int, p: int) -> CompletionResult:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    tau = threshold_for(lam, n, p)
    s = factors.singular_values
    return CompletionResult(m_hat=shrink_factors(factors, tau), lam=float(lam), spectrum=s.copy(),
                            effective_rank=int(np.count_nonzero(s > tau)))


def complete(obs: ObservationSet, lam: float) -> CompletionResult:
    """Soft-threshold the singular values of ``R`` at ``lam * n * p / 2``."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return complete_from_factors(svd(build_R(obs)), lam, obs.n, obs.p)


def objective_value(obs: ObservationSet, M, lam: float) -> float:
    """Penalized empirical risk at ``M``; zero at ``M = 0``."""
    M = check_matrix(M, "M")
    if M.shape != obs.shape:
        raise ValueError(f"dimension mismatch: M is {M.shape}, observations are {obs.shape}")
    n, p = obs.shape
    Y = obs.observed_sum()
    nuc = float(np.sum(svd(M).singular_values)) if np.any(M) else 0.0
    return float(np.sum(M * M) / (n * p) - (2.0 / obs.N) * np.sum(Y * M) + lam * nuc)


def theoretical_lambda(n: int, p: int, N: int, C2: float = 1.0) -> float:
    """``C2 * sqrt(log(n + p) / (N * min(n, p)))``."""
    if min(n, p, N) < 1 or not C2 > 0:
        raise ValueError("n, p, N and C2 must be positive")
    return C2 * math.sqrt(math.log(n + p) / (N * min(n, p)))


def default_grid(n: int, p: int, N: int, num: int = 30, lo: float = 1e-3,
                 hi: float = 10.0) -> LambdaGrid:
    """``num`` log-spaced values spanning ``[lo, hi] * theoretical_lambda(n, p, N)``."""
    base = theoretical_lambda(n, p, N, 1.0)
    return LambdaGrid.logspace(lo * base, hi * base, num)


def oracle_path(factors: SvdFactors, M_true: np.ndarray, grid: LambdaGrid) -> np.ndarray:
    """MSE against ``M_true`` at every grid point from a single SVD of ``R``.

    Uses ``||S_tau - M||^2 = sum_j c_j^2 - 2 sum_j c_j u_j'Mv_j + ||M||^2``
    with ``c_j = (s_j - tau)_+``, so each extra grid point costs O(r).
    """
    n, p = M_true.shape
    proj = np.einsum("ij,ij->j", factors.U, M_true @ factors.V)
    m_sq = float(np.sum(M_true * M_true))
    s = factors.singular_values
    out = np.empty(len(grid))
    for k, lam in enumerate(grid):
        c = np.maximum(s - threshold_for(lam, n, p), 0.0)
        out[k] = max(c @ c - 2.0 * (c @ proj) + m_sq, 0.0) / (n * p)
    return out


def oracle_select(M_true, obs: ObservationSet, grid: LambdaGrid | None = None,
                  factors: SvdFactors | None = None) -> tuple[float, float, CompletionResult]:
    """Grid point with the smallest MSE against the truth (ties -> smallest lambda).

    Returns ``(lambda, mse, result)``; ``result.mse`` is the MSE recomputed
    directly from ``result.m_hat``.
    """
    M_true = check_matrix(M_true, "M_true")
    if M_true.shape != obs.shape:
        raise ValueError(f"dimension mismatch: M_true is {M_true.shape}, observations are {obs.shape}")
    if grid is None:
        grid = default_grid(obs.n, obs.p, obs.N)
    if factors is None:
        factors = svd(build_R(obs))
    path = oracle_path(factors, M_true, grid)
    best = int(np.argmin(path))  # first minimum == smallest lambda
    lam = grid.values[best]
    result = complete_from_factors(factors, lam, obs.n, obs.p)
    result.mse = frobenius_mse(result.m_hat, M_true)
    return lam, result.mse, result


def _as_observations(X) -> ObservationSet:
    if isinstance(X, ObservationSet):
        return X
    return observations_from_masked(X)


class SVTCompleter(TransformerMixin, BaseEstimator):
    """Matrix completion by singular-value soft-thresholding.

    Parameters
    ----------
    lam : float or None, default=None
        Regularization level. ``None`` uses ``theoretical_lambda`` with
        constant ``C2``.
    C2 : float, default=1.0
        Constant of the theoretical regularization level.

    Attributes
    ----------
    result_ : CompletionResult
    completed_ : ndarray of shape (n, p)
    lambda_ : float
    effective_rank_ : int
    singular_values_ : ndarray
        Spectrum of the rescaled observation matrix.

    Notes
    -----
    ``fit`` accepts an :class:`ObservationSet` or an ``(n, p)`` array whose
    missing cells are NaN. ``transform`` fills the NaN cells of an array of
    the fitted shape.
    """

    def __init__(self, lam=None, C2=1.0):
        self.lam = lam
        self.C2 = C2

    def fit(self, X, y=None):
        obs = _as_observations(X)
        lam = self.lam
        if lam is None:
            lam = theoretical_lambda(obs.n, obs.p, obs.N, self.C2)
        self.result_ = complete(obs, lam)
        self._store(obs)
        return self

    def _store(self, obs):
        self.completed_ = self.result_.m_hat
        self.lambda_ = self.result_.lam
        self.effective_rank_ = self.result_.effective_rank
        self.singular_values_ = self.result_.spectrum
        self.n_rows_, self.n_cols_ = obs.shape

    def transform(self, X):
        check_is_fitted(self, "completed_")
        X = np.array(X, dtype=np.float64)
        if X.shape != self.completed_.shape:
            raise ValueError(f"expected shape {self.completed_.shape}, got {X.shape}")
        missing = np.isnan(X)
        X[missing] = self.completed_[missing]
        return X

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X, y)
        if isinstance(X, ObservationSet):
            return self.completed_.copy()
        return self.transform(X)

    def predict(self, rows, cols):
        """Completed values at the given cell coordinates."""
        check_is_fitted(self, "completed_")
        return self.completed_[np.asarray(rows), np.asarray(cols)]


class OracleSVTCompleter(SVTCompleter):
    """Soft-thresholding completer with ``lam`` chosen against a known truth.

    ``fit(X, y)`` takes the ground-truth matrix as ``y`` and picks the grid
    value minimizing the completion MSE. Only meaningful in simulations.

    Parameters
    ----------
    grid : LambdaGrid or sequence of float, optional
        Candidate levels; defaults to 30 log-spaced values spanning
        ``[1e-3, 10]`` times the theoretical level with ``C2 = 1``.
    """

    def __init__(self, grid=None):
        self.grid = grid

    def fit(self, X, y=None):
        if y is None:
            raise ValueError("OracleSVTCompleter.fit needs the true matrix as y")
        obs = _as_observations(X)
        grid = self.grid
        if grid is not None and not isinstance(grid, LambdaGrid):
            grid = LambdaGrid(tuple(grid))
        factors = svd(build_R(obs))
        if grid is None:
            grid = default_grid(obs.n, obs.p, obs.N)
        self.mse_path_ = oracle_path(factors, check_matrix(y, "y"), grid)
        self.grid_ = grid
        _, self.mse_, self.result_ = oracle_select(y, obs, grid, factors=factors)
        self._store(obs)
        return self

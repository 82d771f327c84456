"""Synthetic matrices with smooth one- or multi-dimensional latent structure.

Entry ``(i, j)`` of a generated matrix is ``f_j(theta_i)``: a latent point
``theta_i`` in ``[0, 1]^K`` pushed through a column-specific function
``f_j``. Each ``f_j`` is a truncated trigonometric series whose coefficients
decay like ``b^-(L+1)``, so larger ``L`` gives smoother columns and faster
decaying spectra even though the matrices are full rank.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Rng, as_rng

__all__ = [
    "SmoothnessClass",
    "EmbeddingSpec",
    "fourier_basis",
    "basis_indices",
    "sample_coefficients",
    "eval_embedded_function",
    "generate_matrix",
    "equispaced_theta",
    "integer_root",
]

THETA_UNIFORM = "uniform"
THETA_EQUISPACED = "equispaced"


@dataclass(frozen=True)
class SmoothnessClass:
    """Parameters ``(L, gamma, K)`` of the smooth embedding class."""

    L: int
    gamma: float
    K: int

    def __post_init__(self):
        if self.L < 1 or self.K < 1:
            raise ValueError(f"L and K must be >= 1, got L={self.L}, K={self.K}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def integer_root(n: int, K: int) -> int:
    """Exact integer ``K``-th root of ``n``; ``ValueError`` if there is none."""
    if n < 1 or K < 1:
        raise ValueError(f"need n >= 1 and K >= 1, got n={n}, K={K}")
    r = round(n ** (1.0 / K))
    for cand in (r - 1, r, r + 1):
        if cand >= 1 and cand**K == n:
            return cand
    raise ValueError(f"{n} is not a perfect {K}-th power")


def fourier_basis(b: int, x):
    """Trigonometric orthonormal basis of ``L2[0, 1]``.

    ``psi_1 = 1``, ``psi_{2k} = sqrt(2) cos(2 pi k x)``,
    ``psi_{2k+1} = sqrt(2) sin(2 pi k x)``. Vectorized over ``x``.
    """
    if b < 1:
        raise ValueError(f"basis index must be >= 1, got {b}")
    x = np.asarray(x, dtype=np.float64)
    if b == 1:
        return np.ones_like(x) if x.ndim else 1.0
    k = b // 2
    trig = np.cos if b % 2 == 0 else np.sin
    out = math.sqrt(2.0) * trig(2.0 * math.pi * k * x)
    return out if x.ndim else float(out)


def basis_indices(num_basis: int, K: int = 1) -> list[tuple[int, ...]]:
    """Multi-indices ``(b_1, ..., b_K)`` with ``prod(b) <= num_basis``, lexicographic.

    For ``K = 1`` this is ``[(1,), ..., (num_basis,)]``.
    """
    if K == 1:
        return [(b,) for b in range(1, num_basis + 1)]
    out = []
    for idx in itertools.product(range(1, num_basis + 1), repeat=K):
        if math.prod(idx) <= num_basis:
            out.append(idx)
    return out


def _envelope(indices) -> np.ndarray:
    return np.array([float(math.prod(idx)) for idx in indices])


def sample_coefficients(L: int, num_basis: int = 100, rng=None, K: int = 1) -> np.ndarray:
    """Draw ``beta_b ~ U[-b^-(L+1), b^-(L+1)]`` for every basis index.

    For ``K > 1`` the index ``b`` is a multi-index and the envelope uses
    ``prod(b)``; the order follows :func:`basis_indices`.
    """
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if num_basis < 1:
        raise ValueError(f"num_basis must be >= 1, got {num_basis}")
    bound = _envelope(basis_indices(num_basis, K)) ** -(L + 1)
    u = as_rng(rng).uniform(bound.size)
    return (2.0 * u - 1.0) * bound


def _design(theta: np.ndarray, indices) -> np.ndarray:
    """Basis matrix ``Psi[i, m] = prod_k psi_{b_mk}(theta[i, k])``."""
    theta = np.atleast_2d(theta)
    K = theta.shape[1]
    max_b = max(max(idx) for idx in indices)
    per_axis = [np.column_stack([fourier_basis(b, theta[:, k]) for b in range(1, max_b + 1)])
                for k in range(K)]
    cols = []
    for idx in indices:
        col = per_axis[0][:, idx[0] - 1]
        for k in range(1, K):
            col = col * per_axis[k][:, idx[k] - 1]
        cols.append(col)
    return np.column_stack(cols)


def eval_embedded_function(coeffs, x, K: int = 1):
    """Evaluate ``f(x) = sum_b beta_b psi_b(x)``.

    ``x`` is a scalar or 1-D array for ``K = 1`` and an ``(m, K)`` array (or
    a single ``K``-vector) otherwise.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    indices = _indices_for(coeffs.size, K)
    scalar = np.ndim(x) == 0 or (K > 1 and np.ndim(x) == 1)
    pts = np.asarray(x, dtype=np.float64).reshape(-1, K)
    vals = _design(pts, indices) @ coeffs
    return float(vals[0]) if scalar else vals


def _indices_for(size: int, K: int):
    if K == 1:
        return basis_indices(size, 1)
    # Recover num_basis from the coefficient count.
    nb = 1
    while len(basis_indices(nb, K)) < size:
        nb += 1
    indices = basis_indices(nb, K)
    if len(indices) != size:
        raise ValueError(f"{size} coefficients do not match any K={K} basis truncation")
    return indices


def equispaced_theta(n: int, K: int = 1) -> np.ndarray:
    """Grid ``(i_1, ..., i_K) / n^(1/K)`` with ``i_k in 1..n^(1/K)``, first index slowest."""
    side = integer_root(n, K)
    axis = np.arange(1, side + 1) / side
    grids = np.meshgrid(*([axis] * K), indexing="ij")
    return np.column_stack([g.reshape(-1) for g in grids])


@dataclass
class EmbeddingSpec:
    """Everything needed to rebuild a generated matrix exactly.

    ``coefficient_table[j]`` holds the series coefficients of column ``j``;
    ``theta`` holds one latent point per row. ``gamma`` is an upper envelope
    on every ``L``-th order partial derivative of the column functions,
    computed from the drawn coefficients.
    """

    L: int
    K: int
    gamma: float
    num_basis: int
    coefficient_table: np.ndarray
    theta: np.ndarray
    seed: int | None = None
    stream: tuple[int, ...] = ()
    theta_mode: str = THETA_UNIFORM
    indices: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.indices:
            self.indices = basis_indices(self.num_basis, self.K)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def p(self) -> int:
        return self.coefficient_table.shape[0]

    def evaluate(self) -> np.ndarray:
        return _design(self.theta, self.indices) @ self.coefficient_table.T

    def to_json(self) -> dict:
        return {"L": self.L, "K": self.K, "gamma": self.gamma, "num_basis": self.num_basis,
                "seed": self.seed, "theta_mode": self.theta_mode,
                "n": self.n, "p": self.p, "stream": list(self.stream)}

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return path

    @classmethod
    def from_json(cls, meta: dict) -> "EmbeddingSpec":
        """Regenerate the spec from its seed; the result matches the original bitwise."""
        if meta.get("seed") is None:
            raise ValueError("cannot regenerate an embedding without a seed")
        rng = Rng(int(meta["seed"]), tuple(meta.get("stream", ())))
        _, spec = generate_matrix(int(meta["n"]), int(meta["p"]), int(meta["L"]), int(meta["K"]),
                                  int(meta["num_basis"]), rng, theta_mode=meta["theta_mode"])
        return spec


def _derivative_envelope(coeffs: np.ndarray, indices, L: int) -> float:
    """Bound on any order-``L`` partial of ``sum_m c_m prod_k psi_{b_mk}``."""
    K = len(indices[0])
    freq = np.array([max(b // 2 for b in idx) for idx in indices], dtype=float)
    scale = 2.0 ** (K / 2.0) * (2.0 * math.pi * freq) ** L
    return float(np.max(np.abs(coeffs) @ scale)) if coeffs.ndim == 2 else float(np.abs(coeffs) @ scale)


def generate_matrix(n: int, p: int, L: int, K: int = 1, num_basis: int = 100, rng=None,
                    theta_mode: str = THETA_UNIFORM) -> tuple[np.ndarray, EmbeddingSpec]:
    """Generate ``M[i, j] = f_j(theta_i)`` with independent random ``f_j``.

    Latent points are i.i.d. uniform on ``[0, 1]^K`` (``theta_mode="uniform"``)
    or the equispaced grid. Streams: ``rng.spawn(0)`` draws ``theta`` and
    ``rng.spawn(1, j)`` draws the coefficients of column ``j``.

    Returns
    -------
    M : ndarray, shape (n, p)
    spec : EmbeddingSpec
    """
    if n < 1 or p < 1:
        raise ValueError(f"dimensions must be positive, got {n}x{p}")
    SmoothnessClass(L, 1.0, K)
    rng = as_rng(rng)
    if theta_mode == THETA_UNIFORM:
        theta = rng.spawn(0).uniform(n * K).reshape(n, K)
    elif theta_mode == THETA_EQUISPACED:
        theta = equispaced_theta(n, K)
    else:
        raise ValueError(f"unknown theta_mode {theta_mode!r}")
    table = np.vstack([sample_coefficients(L, num_basis, rng.spawn(1, j), K) for j in range(p)])
    indices = basis_indices(num_basis, K)
    gamma = _derivative_envelope(table, indices, L)
    spec = EmbeddingSpec(L=L, K=K, gamma=gamma, num_basis=num_basis, coefficient_table=table,
                         theta=theta, seed=rng.seed, stream=rng.keys, theta_mode=theta_mode,
                         indices=indices)
    return spec.evaluate(), spec

"""Numerical certificates for the rate theory.

Two groups of objects live here:

* the basis-count function ``J*(eps)``: how many local polynomial terms are
  needed to approximate every ``L``-smooth function on ``[0, 1]^K`` to
  uniform accuracy ``eps``;
* the lower-bound construction: a smooth bump ``phi`` supported on
  ``(-1/2, 1/2)``, its translated tensor products ``Phi_d`` on a partition of
  ``[0, 1]^K`` into ``b`` cubes, binary codes with large pairwise Hamming
  distance, and the packing matrices ``M_w = sum_d Phi_d(Theta) diag(w_d)``
  built from them, together with checks of their separation and
  Kullback-Leibler divergence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .linalg import check_matrix, numerical_rank, svd
from .manifold import integer_root
from .rng import as_rng

__all__ = [
    "BumpParams",
    "PackingSet",
    "CellEnergyCheck",
    "bump_profile",
    "bump_derivative",
    "bump_phi",
    "derivative_envelope",
    "fd_derivative",
    "fd_derivative_envelope",
    "calibrate_c_L",
    "phi_d",
    "cell_indices",
    "cell_energy_check",
    "varshamov_gilbert_codes",
    "hamming_distances",
    "build_packing",
    "smoothness_certificate",
    "separation_check",
    "kl_between_hypotheses",
    "kl_monte_carlo",
    "j_star_count",
    "certify_packing",
]

GRID_POINTS = 100_000
FD_TOL = 1e-3
# Finite-difference steps per derivative order, balancing rounding error
# (grows like h^-l) against the O(h^4) Richardson truncation error.
_FD_STEPS = {0: 1e-3, 1: 1e-3, 2: 1e-3, 3: 5e-4, 4: 5e-4, 5: 5e-4, 6: 5e-4}


# --- bump function -----------------------------------------------------------

@lru_cache(maxsize=None)
def _derivative_numerator(l: int) -> Polynomial:
    """Polynomial ``Q_l`` with ``g^(l)(u) = Q_l(u) s^(-2l) g(u)``, ``s = 1 - 4u^2``.

    ``g(u) = e * exp(-1/s)``. Differentiating ``Q s^(-2l) exp(-1/s)`` gives
    ``Q_{l+1} = Q' s^2 + 16 l u s Q - 8 u Q``.
    """
    if l == 0:
        return Polynomial([1.0])
    Q = _derivative_numerator(l - 1)
    s = Polynomial([1.0, 0.0, -4.0])
    u = Polynomial([0.0, 1.0])
    return Q.deriv() * s**2 + 16 * (l - 1) * u * s * Q - 8 * u * Q


def bump_profile(u):
    """Unnormalized bump ``e * exp(-1 / (1 - 4u^2))`` on ``(-1/2, 1/2)``, else 0."""
    return bump_derivative(u, 0)


def bump_derivative(u, order: int):
    """Exact ``order``-th derivative of :func:`bump_profile`."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    inside = np.abs(u) < 0.5
    ui = u[inside]
    s = 1.0 - 4.0 * ui * ui
    log_mag = 1.0 - 1.0 / s - 2.0 * order * np.log(s)
    out[inside] = np.exp(log_mag) * _derivative_numerator(order)(ui)
    return out if out.ndim else float(out)


def _grid(points: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(-0.5, 0.5, points)


def derivative_envelope(L: int, points: int = GRID_POINTS) -> np.ndarray:
    """``max_u |g^(l)(u)|`` for ``l = 0..L`` on a uniform grid (exact derivatives)."""
    u = _grid(points)
    return np.array([np.max(np.abs(bump_derivative(u, l))) for l in range(L + 1)])


def fd_derivative(f, u, order: int, h: float) -> np.ndarray:
    """Central finite difference of ``order`` with Richardson refinement.

    The stencil ``sum_i (-1)^i C(l, i) f(u + (l/2 - i) h) / h^l`` has error
    ``O(h^2)``; combining steps ``h`` and ``h/2`` cancels that term.
    """
    u = np.asarray(u, dtype=np.float64)
    if order == 0:
        return f(u)

    def stencil(step):
        acc = np.zeros_like(u)
        for i in range(order + 1):
            acc += (-1) ** i * math.comb(order, i) * f(u + (order / 2.0 - i) * step)
        return acc / step**order

    return (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0


def fd_derivative_envelope(c_L: float, L: int, points: int = GRID_POINTS) -> np.ndarray:
    """Finite-difference estimate of ``max_u |phi^(l)(u)|`` for ``l = 0..L``."""
    u = _grid(points)

    def phi(x):
        return c_L * bump_profile(x)

    return np.array([np.max(np.abs(fd_derivative(phi, u, l, _FD_STEPS.get(l, 5e-4))))
                     for l in range(L + 1)])


@dataclass(frozen=True)
class BumpParams:
    """Normalization ``c_L`` making ``|phi^(l)| <= 1`` for ``l = 0..L``."""

    c_L: float
    L: int

    def certify(self, points: int = GRID_POINTS, tol: float = FD_TOL) -> bool:
        """Finite-difference check of the derivative bound."""
        return bool(np.all(fd_derivative_envelope(self.c_L, self.L, points) <= 1.0 + tol))


def bump_phi(u, params: BumpParams):
    """``phi(u) = c_L * e * exp(-1/(1 - 4u^2))`` inside ``(-1/2, 1/2)``, 0 outside."""
    return params.c_L * bump_profile(u)


@lru_cache(maxsize=None)
def calibrate_c_L(L: int, rel_resolution: float = 1e-4) -> BumpParams:
    """Largest ``c_L`` keeping every derivative of order ``<= L`` within 1.

    Bisects ``log c`` over ``[1e-15, 1]`` down to ``rel_resolution`` and
    returns the lower end, so the bound holds for the exact derivatives on
    the grid. Larger ``L`` gives a smaller constant.
    """
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    envelope = float(np.max(derivative_envelope(L)))
    lo, hi = math.log(1e-15), 0.0
    if math.exp(hi) * envelope <= 1.0:
        return BumpParams(1.0, L)
    while hi - lo > math.log1p(rel_resolution):
        mid = 0.5 * (lo + hi)
        if math.exp(mid) * envelope <= 1.0:
            lo = mid
        else:
            hi = mid
    return BumpParams(math.exp(lo), L)


# --- cell functions ----------------------------------------------------------

def _check_b(b: int, K: int) -> int:
    try:
        return integer_root(b, K)
    except ValueError:
        raise ValueError(f"b={b} has no integer {K}-th root") from None


def phi_d(theta, d, b: int, gamma: float, L: int, params: BumpParams | None = None) -> float:
    """``gamma * b^(-L/K) * prod_k phi(b^(1/K) theta_k - d_k + 1/2)``.

    ``d`` is a 1-based multi-index in ``{1, ..., b^(1/K)}^K``; the function
    vanishes outside the cube ``prod_k ((d_k - 1)/b^(1/K), d_k/b^(1/K))``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    d = np.atleast_1d(np.asarray(d, dtype=np.int64))
    K = theta.size
    if d.size != K:
        raise ValueError(f"cell index has {d.size} components, theta has {K}")
    side = _check_b(b, K)
    if np.any(d < 1) or np.any(d > side):
        raise ValueError(f"cell index {tuple(d)} outside 1..{side}")
    params = params or calibrate_c_L(L)
    u = side * theta - d + 0.5
    return float(gamma * b ** (-L / K) * np.prod(bump_phi(u, params)))


def cell_indices(b: int, K: int) -> list[tuple[int, ...]]:
    """All cells ``d`` in lexicographic order (first coordinate slowest)."""
    side = _check_b(b, K)
    return list(itertools.product(range(1, side + 1), repeat=K))


def _axis_bumps(n_side: int, b_side: int, params: BumpParams) -> np.ndarray:
    """``A[d-1, i-1] = phi(b_side * i / n_side - d + 1/2)`` on the equispaced axis.

    The argument is formed from an integer numerator so that translated cells
    see bitwise identical inputs.
    """
    i = np.arange(1, n_side + 1)
    d = np.arange(1, b_side + 1)[:, None]
    num = 2 * b_side * i[None, :] - 2 * d * n_side + n_side
    return bump_phi(num / (2.0 * n_side), params)


def cell_function_matrix(n: int, b: int, gamma: float, L: int, K: int,
                         params: BumpParams | None = None) -> np.ndarray:
    """``F[i, m] = Phi_{d_m}(theta_i)`` on the equispaced grid, cells in :func:`cell_indices` order."""
    params = params or calibrate_c_L(L)
    n_side = integer_root(n, K)
    b_side = _check_b(b, K)
    A = _axis_bumps(n_side, b_side, params)
    grid_idx = list(itertools.product(range(n_side), repeat=K))
    F = np.empty((n, b))
    for m, d in enumerate(cell_indices(b, K)):
        vals = np.ones(n)
        for k in range(K):
            axis_vals = A[d[k] - 1]
            vals = vals * axis_vals[[g[k] for g in grid_idx]]
        F[:, m] = gamma * b ** (-L / K) * vals
    return F


class CellEnergyCheck(NamedTuple):
    lower_ok: bool
    upper_ok: bool
    value: np.ndarray
    lower_bound: float
    upper_bound: float


def _valid_b(n: int, b: int, K: int) -> None:
    if not 1 <= b <= 0.48**K * n:
        raise ValueError(f"b={b} violates 1 <= b <= 0.48^K n = {0.48**K * n:.6g}")


def cell_energy_check(n: int, b: int, gamma: float, L: int, K: int,
                       params: BumpParams | None = None) -> CellEnergyCheck:
    """Check ``g^2 C2 b^-(2L+K)/K <= (1/n) sum_i Phi_d(theta_i)^2 <= g^2 C1 b^-(2L+K)/K``.

    ``C1 = c_L^(2K)`` and ``C2 = (0.1 c_L)^(2K)``. ``value`` holds the
    normalized sum for every cell ``d``.
    """
    _valid_b(n, b, K)
    params = params or calibrate_c_L(L)
    F = cell_function_matrix(n, b, gamma, L, K, params)
    values = np.sum(F * F, axis=0) / n
    scale = gamma**2 * b ** (-(2 * L + K) / K)
    upper = scale * params.c_L ** (2 * K)
    lower = scale * (0.1 * params.c_L) ** (2 * K)
    return CellEnergyCheck(bool(np.all(values >= lower)), bool(np.all(values <= upper)),
                      values, lower, upper)


# --- codes and packing -------------------------------------------------------

def hamming_distances(codes) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    return np.sum(codes[:, None, :] != codes[None, :, :], axis=2)


def varshamov_gilbert_codes(b: int, p: int, count: int, rng=None,
                            max_attempts: int | None = None) -> np.ndarray:
    """``count`` binary words of length ``b p`` with pairwise distance ``>= b p / 8``.

    The first word is all zeros; the rest come from seeded random search,
    accepting a fair-coin word when it is far enough from every accepted
    word. At most ``max_attempts`` candidates are drawn (default
    ``1000 * count``).

    Raises
    ------
    RuntimeError
        If the attempt budget runs out; the message carries the count.
    """
    length = b * p
    if length < 8:
        raise ValueError(f"need b*p >= 8, got {length}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > 2 ** (length / 8) + 1:
        raise ValueError(f"count={count} exceeds the guaranteed 2^(bp/8) + 1 = "
                         f"{2 ** (length / 8) + 1:.6g}")
    rng = as_rng(rng)
    min_dist = math.ceil(length / 8)
    words = [np.zeros(length, dtype=np.uint8)]
    budget = max_attempts if max_attempts is not None else 1000 * count
    attempts = 0
    while len(words) < count:
        if attempts >= budget:
            raise RuntimeError(f"found only {len(words)} of {count} codewords after "
                               f"{attempts} attempts")
        attempts += 1
        cand = rng.bits(length)
        if all(np.count_nonzero(cand != w) >= min_dist for w in words):
            words.append(cand)
    return np.vstack(words)


@dataclass
class PackingSet:
    """Hypothesis matrices ``M_w`` indexed by binary codes ``w``."""

    n: int
    p: int
    b: int
    gamma: float
    L: int
    K: int
    codes: np.ndarray
    matrices: list
    cell_matrix: np.ndarray
    params: BumpParams

    @property
    def C1(self) -> float:
        return self.params.c_L ** (2 * self.K)

    @property
    def C2(self) -> float:
        return (0.1 * self.params.c_L) ** (2 * self.K)

    @property
    def separation_bound(self) -> float:
        return self.gamma**2 * self.C2 / 8.0 * self.b ** (-2 * self.L / self.K)

    @property
    def count(self) -> int:
        return len(self.matrices)


def build_packing(n: int, p: int, b: int, gamma: float, L: int, K: int, count: int,
                  rng=None, codes=None) -> PackingSet:
    """Packing matrices ``M_w = F @ w.reshape(b, p)`` on the equispaced grid.

    ``F`` is the ``n x b`` matrix of cell functions, so each ``M_w`` has rank
    at most ``b``. Code bits are laid out cell-major: bit ``m * p + j`` turns
    on cell ``m`` in column ``j``.
    """
    _valid_b(n, b, K)
    params = calibrate_c_L(L)
    if codes is None:
        codes = varshamov_gilbert_codes(b, p, count, rng)
    codes = np.asarray(codes, dtype=np.uint8)
    if codes.ndim != 2 or codes.shape[1] != b * p:
        raise ValueError(f"codes must have shape (count, {b * p}), got {codes.shape}")
    F = cell_function_matrix(n, b, gamma, L, K, params)
    matrices = [F @ w.reshape(b, p).astype(np.float64) for w in codes]
    return PackingSet(n, p, b, gamma, L, K, codes, matrices, F, params)


def smoothness_certificate(ps: PackingSet) -> float:
    """Largest order-``L`` divided difference of any column along the grid, over ``gamma``.

    Every mixed difference with total order ``L`` is taken on the
    ``n^(1/K)``-per-axis tensor grid. By the mean value theorem each one
    equals an ``L``-th partial derivative at some point, so values ``<= 1``
    certify the derivative bound up to the finite-difference slack.
    """
    side = integer_root(ps.n, ps.K)
    h = 1.0 / side
    worst = 0.0
    for M in ps.matrices:
        for j in range(ps.p):
            col = M[:, j].reshape((side,) * ps.K)
            for orders in itertools.product(range(ps.L + 1), repeat=ps.K):
                if sum(orders) != ps.L:
                    continue
                diff = col
                for axis, o in enumerate(orders):
                    if o:
                        diff = np.diff(diff, n=o, axis=axis)
                if diff.size:
                    worst = max(worst, float(np.max(np.abs(diff))) / h**ps.L)
    return worst / ps.gamma


def _pair_separations(matrices) -> np.ndarray:
    S = len(matrices)
    out = np.zeros((S, S))
    for s in range(S):
        for t in range(s + 1, S):
            D = matrices[s] - matrices[t]
            out[s, t] = out[t, s] = float(np.sum(D * D)) / D.size
    return out


def separation_check(ps: PackingSet, n: int | None = None, p: int | None = None) -> float:
    """Smallest pairwise ``(1/np) ||M_s - M_t||_F^2``; raises if below the bound."""
    if ps.count < 2:
        raise ValueError("separation needs at least two hypotheses")
    if (n is not None and n != ps.n) or (p is not None and p != ps.p):
        raise ValueError(f"packing is {ps.n}x{ps.p}, got n={n}, p={p}")
    sep = _pair_separations(ps.matrices)
    iu = np.triu_indices(ps.count, 1)
    k = int(np.argmin(sep[iu]))
    s, t = int(iu[0][k]), int(iu[1][k])
    if sep[s, t] < ps.separation_bound:
        raise AssertionError(f"hypotheses {s} and {t} are separated by {sep[s, t]:.6g} "
                             f"< bound {ps.separation_bound:.6g}")
    return float(sep[s, t])


def kl_between_hypotheses(M_s, M_t, N: int, sigma: float) -> float:
    """KL divergence ``N / (2 sigma^2 n p) ||M_s - M_t||_F^2`` of the two observation laws."""
    M_s = check_matrix(M_s, "M_s")
    M_t = check_matrix(M_t, "M_t")
    if M_s.shape != M_t.shape:
        raise ValueError(f"dimension mismatch: {M_s.shape} vs {M_t.shape}")
    if not sigma > 0:
        raise ValueError("KL divergence is undefined for sigma <= 0")
    D = M_s - M_t
    return float(N * np.sum(D * D) / (2.0 * sigma**2 * D.size))


def kl_monte_carlo(M_s, M_t, N: int, sigma: float, samples: int = 100_000,
                   rng=None) -> tuple[float, float]:
    """Monte Carlo KL estimate and its standard error.

    Draws ``samples`` single observations ``(X, y)`` under ``M_s`` and
    averages the log-likelihood ratio ``log p_s(y|X) - log p_t(y|X)``; the
    mean is scaled by ``N`` because the ``N`` observations are i.i.d.
    """
    M_s = check_matrix(M_s, "M_s")
    M_t = check_matrix(M_t, "M_t")
    if not sigma > 0:
        raise ValueError("KL divergence is undefined for sigma <= 0")
    rng = as_rng(rng)
    n, p = M_s.shape
    cells = rng.spawn(0).integers(n * p, samples)
    a = M_s.reshape(-1)[cells]
    c = M_t.reshape(-1)[cells]
    y = a + rng.spawn(1).normal(samples, scale=sigma)
    llr = ((y - c) ** 2 - (y - a) ** 2) / (2.0 * sigma**2)
    return float(N * llr.mean()), float(N * llr.std(ddof=1) / math.sqrt(samples))


# --- basis counts -------------------------------------------------------------

def j_star_count(epsilon: float, L: int, K: int, gamma: float = 1.0) -> int:
    """Number of local Taylor terms needed for uniform accuracy ``epsilon``.

    Cubes of half-width ``d = (L! / (gamma K^L))^(1/L) eps^(1/L)`` cover
    ``[0, 1]^K`` with ``ceil(1/d)^K`` cells, each carrying ``C(K+L, L)``
    monomials. Ratios within ``1e-12`` of an integer are rounded to it
    before the ceiling.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if L < 1 or K < 1 or not gamma > 0:
        raise ValueError("L, K must be >= 1 and gamma > 0")
    d = (math.factorial(L) / (gamma * K**L)) ** (1.0 / L) * epsilon ** (1.0 / L)
    ratio = 1.0 / d
    nearest = round(ratio)
    cells = nearest if abs(ratio - nearest) <= 1e-12 * ratio else math.ceil(ratio)
    return math.comb(K + L, L) * max(cells, 1) ** K


# --- combined report ------------------------------------------------------------

def certify_packing(n: int, p: int, b: int, gamma: float, L: int, K: int, count: int,
                    rng=None, N: int | None = None, sigma: float = 1.0,
                    mc_samples: int = 100_000) -> dict:
    """Run every construction check and return a JSON-ready report."""
    rng = as_rng(rng)
    N = n * p if N is None else N
    ps = build_packing(n, p, b, gamma, L, K, count, rng.spawn(0))
    checks = {}

    # disjoint supports: at most one cell function is non-zero at every grid point
    F = ps.cell_matrix
    overlap = (F != 0).sum(axis=1)
    checks["disjoint_support"] = bool(np.all(overlap <= 1))

    energy = cell_energy_check(n, b, gamma, L, K, ps.params)
    checks["energy_lower"] = energy.lower_ok
    checks["energy_upper"] = energy.upper_ok

    dist = hamming_distances(ps.codes)
    iu = np.triu_indices(ps.count, 1)
    checks["hamming"] = bool(np.all(dist[iu] >= b * p / 8))
    checks["rank"] = all(numerical_rank(svd(M).singular_values) <= b for M in ps.matrices)
    checks["smoothness"] = smoothness_certificate(ps) <= 1.1
    checks["c_L_certified"] = ps.params.certify()

    sep = _pair_separations(ps.matrices)
    min_sep = float(np.min(sep[iu])) if iu[0].size else float("nan")
    checks["separation"] = bool(iu[0].size and min_sep >= ps.separation_bound)

    S = ps.count
    kl = np.zeros((S, S))
    identity_ok = True
    mc_ok = True
    for s in range(S):
        for t in range(S):
            if s == t:
                continue
            kl[s, t] = kl_between_hypotheses(ps.matrices[s], ps.matrices[t], N, sigma)
            identity_ok &= bool(np.isclose(kl[s, t], N / (2 * sigma**2) * sep[s, t],
                                           rtol=1e-12, atol=0.0))
            if s < t:
                est, se = kl_monte_carlo(ps.matrices[s], ps.matrices[t], N, sigma, mc_samples,
                                         rng.spawn(1, s, t))
                mc_ok &= abs(est - kl[s, t]) <= 3.0 * se
    checks["kl_identity"] = identity_ok
    checks["kl_monte_carlo"] = mc_ok

    return {
        "n": n, "p": p, "b": b, "L": L, "K": K, "gamma": gamma, "count": S,
        "N": N, "sigma": sigma,
        "c_L": ps.params.c_L,
        "min_separation": min_sep,
        "bound": ps.separation_bound,
        "cell_energy": [float(v) for v in energy.value],
        "cell_energy_bounds": [energy.lower_bound, energy.upper_bound],
        "min_hamming": int(np.min(dist[iu])) if iu[0].size else None,
        "kl_matrix": kl.tolist(),
        "checks": {k: ("pass" if v else "fail") for k, v in checks.items()},
    }

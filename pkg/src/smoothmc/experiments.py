"""Rate-of-convergence simulations and the stochastic-error scaling diagnostic.

Every replicate derives its own random stream from the config seed
(``Rng(seed).spawn(L, n, replicate)``), and results are collected by key
before aggregation, so outputs do not depend on the number of worker
threads or on completion order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .estimator import LambdaGrid, default_grid, oracle_select
from .linalg import operator_norm
from .manifold import generate_matrix
from .rng import Rng, as_rng
from .sampling import WITH_REPLACEMENT, WITHOUT_REPLACEMENT, empirical_delta, observe, sample_masks

__all__ = [
    "RateExperimentConfig",
    "RateResult",
    "ReplicateError",
    "DeltaScalingResult",
    "theoretical_slope",
    "loglog_slope",
    "bootstrap_slope_ci",
    "run_rate_experiment",
    "run_delta_scaling",
    "thread_count",
]

logger = logging.getLogger(__name__)

THREADS_ENV = "SMOOTHMC_THREADS"
BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_LEVEL = 0.95
_BOOTSTRAP_STREAM = 0xB0_07


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit argument, then ``SMOOTHMC_THREADS``, then CPU count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if env:
            threads = int(env)
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def theoretical_slope(L: int, K: int) -> float:
    """Exponent ``2L / (2L + K)`` of the MSE rate in ``n``."""
    if L < 1 or K < 1:
        raise ValueError(f"L and K must be >= 1, got L={L}, K={K}")
    return 2.0 * L / (2.0 * L + K)


def loglog_slope(points) -> tuple[float, float]:
    """OLS fit of ``log(mse)`` on ``log(n)``; returns ``(slope, intercept)``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if np.unique(pts[:, 0]).size < 2:
        raise ValueError("need at least two distinct n values")
    if np.any(pts[:, 0] <= 0):
        raise ValueError("n values must be positive")
    if np.any(pts[:, 1] <= 0):
        raise ValueError("mse values must be positive for a log-log fit")
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    return slope, float(y.mean() - slope * x.mean())


def bootstrap_slope_ci(per_replicate_mses: dict, resamples: int = BOOTSTRAP_RESAMPLES,
                       level: float = BOOTSTRAP_LEVEL, rng=None) -> tuple[float, float]:
    """Percentile interval for the slope of log mean MSE on log n.

    ``per_replicate_mses`` maps each ``n`` to its replicate MSEs. Each
    resample draws replicates with replacement within every ``n``, averages
    them and refits the slope.
    """
    if resamples < 100:
        raise ValueError(f"need at least 100 resamples, got {resamples}")
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    rng = as_rng(rng)
    sizes = sorted(per_replicate_mses)
    tables = [np.asarray(per_replicate_mses[n], dtype=np.float64) for n in sizes]
    log_n = np.log(np.asarray(sizes, dtype=np.float64))
    xc = log_n - log_n.mean()
    means = np.empty((resamples, len(sizes)))
    for k, vals in enumerate(tables):
        idx = rng.spawn(k).integers(vals.size, resamples * vals.size).reshape(resamples, vals.size)
        means[:, k] = vals[idx].mean(axis=1)
    logm = np.log(means)
    slopes = (logm - logm.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(slopes, [alpha, 1.0 - alpha])
    point, _ = loglog_slope([(n, v.mean()) for n, v in zip(sizes, tables)])
    return float(min(lo, point)), float(max(hi, point))


@dataclass
class RateExperimentConfig:
    sizes: list = field(default_factory=lambda: [200, 400, 800, 1600])
    L_values: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    K: int = 1
    nu: float = 0.3
    sigma: float = 1.0
    replicates: int = 20
    num_basis: int = 100
    lambda_grid_spec: dict = field(default_factory=lambda: {"num": 30, "lo": 1e-3, "hi": 10.0})
    seed: int = 0
    sampling_mode: str = WITHOUT_REPLACEMENT

    def __post_init__(self):
        self.sizes = [int(s) for s in self.sizes]
        self.L_values = [int(L) for L in self.L_values]
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be non-empty and strictly increasing")
        if self.sizes[0] < 1:
            raise ValueError("sizes must be positive")
        if not self.L_values or min(self.L_values) < 1 or self.K < 1:
            raise ValueError("L values and K must be >= 1")
        if not 0 < self.nu < 1:
            raise ValueError(f"nu must be in (0, 1), got {self.nu}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.sampling_mode not in (WITH_REPLACEMENT, WITHOUT_REPLACEMENT):
            raise ValueError(f"unknown sampling_mode {self.sampling_mode!r}")
        unknown = set(self.lambda_grid_spec) - {"num", "lo", "hi"}
        if unknown:
            raise ValueError(f"unknown lambda_grid_spec keys: {sorted(unknown)}")

    @classmethod
    def from_json(cls, data: dict) -> "RateExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RateExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def grid_for(self, n: int, p: int, N: int) -> LambdaGrid:
        spec = {"num": 30, "lo": 1e-3, "hi": 10.0, **self.lambda_grid_spec}
        return default_grid(n, p, N, int(spec["num"]), float(spec["lo"]), float(spec["hi"]))

    def observed_count(self, n: int) -> int:
        return max(1, round((1.0 - self.nu) * n * n))


class ReplicateError(RuntimeError):
    def __init__(self, L, n, replicate, seed, cause):
        super().__init__(f"replicate failed (L={L}, n={n}, replicate={replicate}, seed={seed}): "
                         f"{cause}")
        self.L, self.n, self.replicate, self.seed = L, n, replicate, seed


@dataclass
class RateResult:
    config: RateExperimentConfig
    records: list  # (L, n, replicate, lambda, mse), sorted
    per_L: dict

    def mses(self, L: int) -> dict:
        out: dict = {}
        for rL, n, _, _, mse in self.records:
            if rL == L:
                out.setdefault(n, []).append(mse)
        return out

    def mean_mse(self, L: int) -> dict:
        return {n: float(np.mean(v)) for n, v in self.mses(L).items()}

    def results_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["L", "n", "replicate", "lambda", "mse"])
        for L, n, r, lam, mse in self.records:
            writer.writerow([L, n, r, repr(lam), repr(mse)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"per_L": {str(L): v for L, v in self.per_L.items()},
                "config": asdict(self.config)}

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        results = out_dir / "rate_results.csv"
        summary = out_dir / "rate_summary.json"
        results.write_text(self.results_csv())
        summary.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return results, summary


def _run_replicate(cfg: RateExperimentConfig, L: int, n: int, r: int) -> tuple[float, float]:
    rng = Rng(cfg.seed).spawn(L, n, r)
    M, _ = generate_matrix(n, n, L, cfg.K, cfg.num_basis, rng.spawn(0))
    N = cfg.observed_count(n)
    masks = sample_masks(n, n, N, cfg.sampling_mode, rng.spawn(1))
    obs = observe(M, masks, cfg.sigma, rng.spawn(2), mode=cfg.sampling_mode)
    lam, mse, _ = oracle_select(M, obs, cfg.grid_for(n, n, N))
    return lam, mse


def run_rate_experiment(cfg: RateExperimentConfig, threads: int | None = None) -> RateResult:
    """Simulate every ``(L, n, replicate)`` cell, then fit per-``L`` slopes.

    Each replicate generates ``M``, observes ``round((1 - nu) n^2)`` noisy
    entries, and records the oracle-selected ``lambda`` and MSE. Slopes
    need at least two sizes; otherwise they are reported as ``None``.
    """
    jobs = [(L, n, r) for L in cfg.L_values for n in cfg.sizes for r in range(cfg.replicates)]
    workers = thread_count(threads)

    def task(job):
        L, n, r = job
        try:
            return job, _run_replicate(cfg, L, n, r)
        except Exception as exc:
            raise ReplicateError(L, n, r, cfg.seed, exc) from exc

    if workers == 1:
        outcomes = [task(j) for j in jobs]
    else:
        # Largest matrices first keeps the pool busy at the end.
        order = sorted(jobs, key=lambda j: -j[1])
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(task, order))
    by_key = dict(outcomes)
    records = [(L, n, r, by_key[(L, n, r)][0], by_key[(L, n, r)][1]) for (L, n, r) in jobs]

    per_L = {}
    for L in cfg.L_values:
        table: dict = {}
        for rL, n, _, _, mse in records:
            if rL == L:
                table.setdefault(n, []).append(mse)
        entry = {"theoretical_slope": theoretical_slope(L, cfg.K),
                 "mean_mse": {str(n): float(np.mean(v)) for n, v in table.items()},
                 "slope": None, "intercept": None, "ci_lo": None, "ci_hi": None}
        if len(table) >= 2:
            slope, intercept = loglog_slope([(n, np.mean(v)) for n, v in table.items()])
            lo, hi = bootstrap_slope_ci(table, rng=Rng(cfg.seed).spawn(_BOOTSTRAP_STREAM, L))
            entry.update(slope=slope, intercept=intercept, ci_lo=lo, ci_hi=hi)
        per_L[L] = entry
        logger.info("L=%d slope=%s theory=%.3f", L, entry["slope"], entry["theoretical_slope"])
    return RateResult(cfg, records, per_L)


@dataclass
class DeltaScalingResult:
    n: int
    p: int
    sigma: float
    N_values: list
    medians: list
    norms: list  # per N, replicate operator norms
    slope: float | None
    intercept: float | None

    def to_json(self) -> dict:
        return {"n": self.n, "p": self.p, "sigma": self.sigma, "N_values": self.N_values,
                "median_opnorm": self.medians, "slope": self.slope,
                "intercept": self.intercept}

    def table_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["N", "median_opnorm"])
        for N, med in zip(self.N_values, self.medians):
            writer.writerow([N, repr(med)])
        return buf.getvalue()


def run_delta_scaling(n: int, p: int, N_values, sigma: float, replicates: int, rng=None,
                      M=None, threads: int | None = None, tol: float = 1e-8) -> DeltaScalingResult:
    """Median ``||Delta||_op`` per sample size and its log-log slope in ``N``.

    Observations are drawn with replacement from ``M`` (zero matrix by
    default). Replicate ``r`` at size ``N`` uses stream ``rng.spawn(N, r)``.
    """
    rng = as_rng(rng)
    M = np.zeros((n, p)) if M is None else np.asarray(M, dtype=np.float64)
    if M.shape != (n, p):
        raise ValueError(f"M must be {n}x{p}, got {M.shape}")
    N_values = [int(N) for N in N_values]
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")

    def one(job):
        N, r = job
        sub = rng.spawn(N, r)
        masks = sample_masks(n, p, N, WITH_REPLACEMENT, sub.spawn(0))
        obs = observe(M, masks, sigma, sub.spawn(1), mode=WITH_REPLACEMENT)
        return operator_norm(empirical_delta(obs, M), tol=tol)

    jobs = [(N, r) for N in N_values for r in range(replicates)]
    workers = thread_count(threads)
    if workers == 1:
        values = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, jobs))
    norms = [values[k * replicates:(k + 1) * replicates] for k in range(len(N_values))]
    medians = [float(np.median(v)) for v in norms]
    slope = intercept = None
    if len(set(N_values)) >= 2 and all(m > 0 for m in medians):
        slope, intercept = loglog_slope(list(zip(N_values, medians)))
    return DeltaScalingResult(n, p, float(sigma), N_values, medians, norms, slope, intercept)

"""Uniform (MCAR) observation model.

Each observation ``t`` reveals the cell ``(row_t, col_t)`` drawn uniformly
from the ``n * p`` cells and records ``y_t = M[row_t, col_t] + xi_t`` with
Gaussian noise of standard deviation ``sigma``. Draws are either i.i.d.
(``"with_replacement"``) or a uniform subset of distinct cells
(``"without_replacement"``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .linalg import check_matrix
from .rng import as_rng

__all__ = [
    "WITH_REPLACEMENT",
    "WITHOUT_REPLACEMENT",
    "MaskIndex",
    "ObservationSet",
    "sample_masks",
    "observe",
    "build_R",
    "empirical_delta",
    "observations_from_masked",
    "write_observations",
    "read_observations",
]

WITH_REPLACEMENT = "with_replacement"
WITHOUT_REPLACEMENT = "without_replacement"
_MODES = (WITH_REPLACEMENT, WITHOUT_REPLACEMENT)


class MaskIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """``N`` observed triples ``(row, col, y)`` of an ``n x p`` matrix."""

    n: int
    p: int
    rows: np.ndarray
    cols: np.ndarray
    y: np.ndarray
    mode: str = WITH_REPLACEMENT
    sigma: float = 0.0
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "y", y)
        if self.n < 1 or self.p < 1:
            raise ValueError(f"dimensions must be positive, got {self.n}x{self.p}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not (rows.ndim == cols.ndim == y.ndim == 1 and rows.size == cols.size == y.size):
            raise ValueError("rows, cols and y must be 1-D arrays of equal length")
        if rows.size < 1:
            raise ValueError("an observation set needs at least one sample")
        if rows.min() < 0 or rows.max() >= self.n or cols.min() < 0 or cols.max() >= self.p:
            raise ValueError(f"mask index outside the {self.n}x{self.p} grid")
        if not np.all(np.isfinite(y)):
            raise ValueError("observed values contain NaN or Inf")
        if self.mode == WITHOUT_REPLACEMENT:
            flat = rows * self.p + cols
            if np.unique(flat).size != flat.size:
                raise ValueError("without_replacement observations must hit distinct cells")

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (self.shape == other.shape and self.mode == other.mode
                and self.sigma == other.sigma and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols) and np.array_equal(self.y, other.y))

    __hash__ = None

    @property
    def N(self) -> int:
        return int(self.y.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.p)

    def masks(self) -> list[MaskIndex]:
        return [MaskIndex(int(i), int(j)) for i, j in zip(self.rows, self.cols)]

    def observed_sum(self) -> np.ndarray:
        """``Y = sum_t y_t X_t``; repeated cells accumulate."""
        flat = self.rows * self.p + self.cols
        Y = np.bincount(flat, weights=self.y, minlength=self.n * self.p)
        return Y.reshape(self.n, self.p)


def sample_masks(n: int, p: int, N: int, mode: str = WITH_REPLACEMENT, rng=None) -> np.ndarray:
    """Draw ``N`` uniformly random cells of an ``n x p`` grid.

    Returns
    -------
    ndarray of int64, shape (N, 2)
        ``(row, col)`` pairs in draw order.
    """
    rng = as_rng(rng)
    if n < 1 or p < 1:
        raise ValueError(f"dimensions must be positive, got {n}x{p}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    cells = n * p
    if mode == WITH_REPLACEMENT:
        flat = rng.integers(cells, N)
    elif mode == WITHOUT_REPLACEMENT:
        if N > cells:
            raise ValueError(f"cannot draw N={N} distinct cells from a {n}x{p} grid")
        flat = rng.choice_without_replacement(cells, N)
    else:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    return np.column_stack([flat // p, flat % p])


def observe(M, masks, sigma: float = 0.0, rng=None, mode: str | None = None,
            seed: int | None = None) -> ObservationSet:
    """Noisy readings ``y_t = M[masks[t]] + N(0, sigma^2)``.

    ``mode`` defaults to ``without_replacement`` when the masks are distinct
    cells and ``with_replacement`` otherwise.
    """
    M = check_matrix(M, "M")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    masks = np.asarray(masks, dtype=np.int64).reshape(-1, 2)
    rows, cols = masks[:, 0], masks[:, 1]
    n, p = M.shape
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= p):
        raise ValueError(f"mask index outside the {n}x{p} grid")
    y = M[rows, cols].copy()
    if sigma > 0:
        y += as_rng(rng).normal(y.size, scale=sigma)
    if mode is None:
        distinct = np.unique(rows * p + cols).size == rows.size
        mode = WITHOUT_REPLACEMENT if distinct else WITH_REPLACEMENT
    return ObservationSet(n, p, rows, cols, y, mode=mode, sigma=float(sigma), seed=seed)


def build_R(obs: ObservationSet) -> np.ndarray:
    """Inverse-probability-weighted observations ``(n p / N) sum_t y_t X_t``."""
    return obs.observed_sum() * (obs.n * obs.p / obs.N)


def empirical_delta(obs: ObservationSet, M) -> np.ndarray:
    """Stochastic error ``(1/N) sum_t y_t X_t - M / (n p)``."""
    M = check_matrix(M, "M")
    if M.shape != obs.shape:
        raise ValueError(f"dimension mismatch: M is {M.shape}, observations are {obs.shape}")
    return obs.observed_sum() / obs.N - M / (obs.n * obs.p)


def observations_from_masked(X, sigma: float = 0.0) -> ObservationSet:
    """Observation set from a matrix whose missing cells are NaN."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {X.shape}")
    rows, cols = np.nonzero(~np.isnan(X))
    if rows.size == 0:
        raise ValueError("no observed entries")
    return ObservationSet(X.shape[0], X.shape[1], rows, cols, X[rows, cols],
                          mode=WITHOUT_REPLACEMENT, sigma=sigma)


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def write_observations(obs: ObservationSet, path, sidecar=None) -> tuple[Path, Path]:
    """Write ``row,col,y`` CSV plus the ``{n, p, N, mode, sigma, seed}`` sidecar.

    Reals are written with ``repr`` (shortest round-trip form), so reading
    the files back reproduces every value bit for bit.
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else _sidecar_path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "y"])
        for i, j, v in zip(obs.rows.tolist(), obs.cols.tolist(), obs.y.tolist()):
            writer.writerow([i, j, repr(v)])
    meta = {"n": obs.n, "p": obs.p, "N": obs.N, "mode": obs.mode,
            "sigma": obs.sigma, "seed": obs.seed}
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return path, sidecar


def read_observations(path, sidecar=None) -> ObservationSet:
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else _sidecar_path(path)
    meta = json.loads(sidecar.read_text())
    rows, cols, y = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["row", "col", "y"]:
            raise ValueError(f"{path}: expected header row,col,y, got {','.join(header)}")
        for rec in reader:
            rows.append(int(rec[0]))
            cols.append(int(rec[1]))
            y.append(float(rec[2]))
    if len(y) != meta["N"]:
        raise ValueError(f"{path}: sidecar declares N={meta['N']} but file has {len(y)} rows")
    return ObservationSet(int(meta["n"]), int(meta["p"]), np.array(rows, dtype=np.int64),
                          np.array(cols, dtype=np.int64), np.array(y), mode=meta["mode"],
                          sigma=float(meta["sigma"]), seed=meta.get("seed"))

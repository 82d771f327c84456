"""Dense matrix CSV files with a JSON dimension sidecar."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .linalg import check_matrix

__all__ = ["write_matrix", "read_matrix"]


def write_matrix(A, path, sidecar=None) -> tuple[Path, Path]:
    """Write ``A`` row by row (shortest round-trip reals) plus ``{rows, cols}``."""
    A = check_matrix(A)
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in A.tolist():
            writer.writerow([repr(v) for v in row])
    sidecar.write_text(json.dumps({"rows": A.shape[0], "cols": A.shape[1]}) + "\n")
    return path, sidecar


def read_matrix(path, sidecar=None) -> np.ndarray:
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
    with open(path, newline="") as fh:
        A = np.array([[float(v) for v in row] for row in csv.reader(fh)], dtype=np.float64)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if A.shape != (meta["rows"], meta["cols"]):
            raise ValueError(f"{path}: sidecar declares {meta['rows']}x{meta['cols']}, "
                             f"file holds {A.shape[0]}x{A.shape[1] if A.ndim == 2 else 0}")
    return check_matrix(A)

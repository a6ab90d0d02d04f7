"""MatrixMarket and CSV serialization.

Observation lists go to MatrixMarket coordinate format with one line per
observation (duplicates each get their own line, file order preserved,
1-based indices).  Dense matrices go to MatrixMarket array format
(column-major body, per the format spec) and to headerless row-major CSV.

The readers are hand-rolled rather than delegated to scipy.io because
scipy's coordinate reader is free to merge or reorder duplicate entries,
and observation order is significant here.
"""

from __future__ import annotations

import numpy as np

from .model import ObservationSet, as_matrix

__all__ = [
    "write_observations_mm",
    "read_observations_mm",
    "write_dense_mm",
    "read_dense_mm",
    "write_dense_csv",
    "read_dense_csv",
]

_COORD_HEADER = "%%MatrixMarket matrix coordinate real general"
_ARRAY_HEADER = "%%MatrixMarket matrix array real general"


def write_observations_mm(path, omega, values=None):
    """Write an observation set (and optional paired values) as coordinate MM.

    With ``values=None`` every entry is written as 1.0.
    """
    if values is None:
        values = np.ones(omega.m)
    values = np.asarray(values, dtype=float)
    if values.shape != (omega.m,):
        raise ValueError(f"values length {values.shape} != m={omega.m}")
    with open(path, "w") as fh:
        fh.write(_COORD_HEADER + "\n")
        fh.write(f"{omega.d1} {omega.d2} {omega.m}\n")
        for i, j, v in zip(omega.rows, omega.cols, values):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_observations_mm(path):
    """Read coordinate MM back into (ObservationSet, values), order preserved."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.lower().startswith("%%matrixmarket matrix coordinate real"):
            raise ValueError(f"not a coordinate real MatrixMarket file: {header!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        d1, d2, nnz = (int(tok) for tok in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            toks = fh.readline().split()
            rows[k] = int(toks[0]) - 1
            cols[k] = int(toks[1]) - 1
            vals[k] = float(toks[2]) if len(toks) > 2 else 1.0
    return ObservationSet(d1, d2, rows, cols), vals


def write_dense_mm(path, X):
    """Write a dense matrix in MatrixMarket array format (column-major body)."""
    X = as_matrix(X)
    d1, d2 = X.shape
    with open(path, "w") as fh:
        fh.write(_ARRAY_HEADER + "\n")
        fh.write(f"{d1} {d2}\n")
        for v in X.flatten(order="F"):
            fh.write(f"{float(v)!r}\n")


def read_dense_mm(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.lower().startswith("%%matrixmarket matrix array real"):
            raise ValueError(f"not an array real MatrixMarket file: {header!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        d1, d2 = (int(tok) for tok in line.split())
        body = np.array([float(fh.readline()) for _ in range(d1 * d2)])
    return body.reshape((d1, d2), order="F")


def write_dense_csv(path, X):
    """Row-major CSV, no header: one matrix row per line."""
    np.savetxt(path, as_matrix(X), delimiter=",")


def read_dense_csv(path):
    X = np.loadtxt(path, delimiter=",")
    return np.atleast_2d(X)

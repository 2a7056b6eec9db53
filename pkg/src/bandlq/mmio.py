"""Matrix Market I/O for sparse matrices and sparsity patterns.

Writes 1-based coordinate files with deterministic entry ordering
(row-major) and 17 significant digits, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .sparsecore import binarize, canonicalize

_REAL_HEADER = "%%MatrixMarket matrix coordinate real general"
_PATTERN_HEADER = "%%MatrixMarket matrix coordinate pattern general"


def write_matrix(path, A):
    A = canonicalize(A).tocoo()
    with open(path, "w") as f:
        f.write(_REAL_HEADER + "\n")
        f.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            f.write(f"{i + 1} {j + 1} {v:.17g}\n")


def write_pattern(path, X):
    X = binarize(X).tocoo()
    with open(path, "w") as f:
        f.write(_PATTERN_HEADER + "\n")
        f.write(f"{X.shape[0]} {X.shape[1]} {X.nnz}\n")
        for i, j in zip(X.row, X.col):
            f.write(f"{i + 1} {j + 1}\n")


def read_matrix(path):
    with open(path) as f:
        header = f.readline().strip()
        if "pattern" in header:
            raise ValueError(f"{path}: pattern file, use read_pattern")
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        nrows, ncols, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            ti, tj, tv = f.readline().split()
            rows[k] = int(ti) - 1
            cols[k] = int(tj) - 1
            vals[k] = float(tv)
    return canonicalize(sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)))


def read_pattern(path):
    with open(path) as f:
        header = f.readline().strip()
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        nrows, ncols, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        for k in range(nnz):
            parts = f.readline().split()
            rows[k] = int(parts[0]) - 1
            cols[k] = int(parts[1]) - 1
    vals = np.ones(nnz)
    return binarize(sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)))

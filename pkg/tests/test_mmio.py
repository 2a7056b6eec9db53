"""Matrix Market reading/writing round trips and determinism."""

import numpy as np
import scipy.sparse as sp

from bandlq.mmio import read_matrix, read_pattern, write_matrix, write_pattern
from bandlq.sparsecore import binarize, canonicalize
from conftest import random_banded


def test_matrix_round_trip(tmp_path, rng):
    A = canonicalize(sp.csr_matrix(random_banded(9, 2, rng)))
    path = tmp_path / "a.mtx"
    write_matrix(path, A)
    B = read_matrix(path)
    assert (A != B).nnz == 0
    np.testing.assert_array_equal(A.toarray(), B.toarray())


def test_pattern_round_trip(tmp_path, rng):
    X = binarize(sp.csr_matrix(rng.random((7, 5)) < 0.4))
    path = tmp_path / "p.mtx"
    write_pattern(path, X)
    Y = read_pattern(path)
    assert (X != Y).nnz == 0


def test_write_is_deterministic(tmp_path, rng):
    A = canonicalize(sp.csr_matrix(random_banded(11, 3, rng)))
    p1, p2 = tmp_path / "a1.mtx", tmp_path / "a2.mtx"
    write_matrix(p1, A)
    write_matrix(p2, A)
    assert p1.read_bytes() == p2.read_bytes()


def test_full_precision_round_trip(tmp_path):
    vals = np.array([[np.pi, 0.0], [1.0 / 3.0, 1e-300]])
    A = canonicalize(sp.csr_matrix(vals))
    path = tmp_path / "pi.mtx"
    write_matrix(path, A)
    B = read_matrix(path)
    np.testing.assert_array_equal(A.toarray(), B.toarray())


def test_header_kinds(tmp_path, rng):
    A = canonicalize(sp.csr_matrix(random_banded(4, 1, rng)))
    mp = tmp_path / "m.mtx"
    write_matrix(mp, A)
    assert mp.read_text().splitlines()[0] \
        == "%%MatrixMarket matrix coordinate real general"
    pp = tmp_path / "p.mtx"
    write_pattern(pp, binarize(A))
    assert pp.read_text().splitlines()[0] \
        == "%%MatrixMarket matrix coordinate pattern general"

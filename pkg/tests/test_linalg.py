import math

import numpy as np
import pytest

from ldplab.errors import DimensionMismatch
from ldplab.linalg import (
    ColumnList,
    SymmetricPSD,
    gram,
    log_det_complement,
    operator_norm,
    psd_sqrt,
    signed_permutation_equal,
    sym_eigenvalues,
)
from ldplab.samplers import SeededRng, haar_stiefel


def spd(mat):
    return SymmetricPSD.from_matrix(mat)


def test_gram_identity():
    s = gram(np.eye(2))
    assert np.allclose(s.matrix, np.eye(2))


def test_gram_unit_row():
    s = gram(np.array([[0.6, 0.8]]))
    assert s.matrix.shape == (1, 1)
    assert abs(s.matrix[0, 0] - 1.0) < 1e-15


def test_gram_orthonormal_rows():
    a = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    assert np.allclose(gram(a).matrix, np.eye(2), atol=1e-15)


def test_eigenvalues_sorted():
    assert np.allclose(sym_eigenvalues(spd(np.diag([3.0, 1.0, 2.0]))), [3, 2, 1])


def test_eigenvalues_2x2_analytic():
    vals = sym_eigenvalues(spd(np.array([[2.0, 1.0], [1.0, 2.0]])))
    assert np.allclose(vals, [3.0, 1.0])


def _charpoly_roots_bisection(mat, n_grid=4000):
    """Independent eigenvalue oracle: sign changes of det(S - x I) located
    by bisection."""
    hi = float(np.max(np.abs(mat))) * mat.shape[0] + 1.0
    xs = np.linspace(-1e-6, hi, n_grid)
    dets = np.array([np.linalg.det(mat - x * np.eye(mat.shape[0])) for x in xs])
    roots = []
    for i in range(len(xs) - 1):
        if dets[i] == 0.0:
            roots.append(xs[i])
        elif dets[i] * dets[i + 1] < 0:
            lo_x, hi_x = xs[i], xs[i + 1]
            for _ in range(200):
                mid = 0.5 * (lo_x + hi_x)
                dm = np.linalg.det(mat - mid * np.eye(mat.shape[0]))
                if dets[i] * dm <= 0:
                    hi_x = mid
                else:
                    lo_x = mid
            roots.append(0.5 * (lo_x + hi_x))
    return sorted(roots, reverse=True)


def test_eigenvalues_match_charpoly_bisection():
    gen = np.random.default_rng(7)
    a = gen.standard_normal((5, 9))
    s = gram(a)
    oracle = _charpoly_roots_bisection(s.matrix)
    assert len(oracle) == 5
    assert np.allclose(sym_eigenvalues(s), oracle, atol=1e-7, rtol=1e-7)


def test_log_det_complement_zero():
    assert log_det_complement(spd(np.zeros((3, 3)))) == 0.0


def test_log_det_complement_diag():
    val = log_det_complement(spd(np.diag([0.5, 0.5])))
    assert abs(val - 2 * math.log(0.5)) < 1e-14


def test_log_det_complement_boundary():
    assert log_det_complement(spd(np.diag([1.0, 0.3]))) == -math.inf
    assert log_det_complement(spd(np.diag([1.0 - 1e-13, 0.3]))) == -math.inf


def test_psd_sqrt_identity():
    assert np.allclose(psd_sqrt(spd(np.eye(3))).matrix, np.eye(3))


def test_psd_sqrt_diag():
    r = psd_sqrt(spd(np.diag([4.0, 9.0])))
    assert np.allclose(r.matrix, np.diag([2.0, 3.0]))


def test_psd_sqrt_self_consistency():
    gen = np.random.default_rng(11)
    s = gram(gen.standard_normal((4, 7)))
    r = psd_sqrt(s)
    resid = np.linalg.norm(r.matrix @ r.matrix - s.matrix)
    assert resid <= 1e-9 * (1.0 + np.linalg.norm(s.matrix))


def test_operator_norm():
    assert operator_norm(spd(np.zeros((2, 2)))) == 0.0
    assert abs(operator_norm(spd(np.diag([0.2, 0.9]))) - 0.9) < 1e-15


def test_operator_norm_haar_gram():
    v = haar_stiefel(SeededRng(5), 3, 12)
    assert abs(operator_norm(gram(v)) - 1.0) < 1e-9


def cols(dim, arr):
    return ColumnList.from_columns(dim, np.asarray(arr, dtype=float))


def test_signed_permutation_sign_flip():
    p = cols(2, [[0.5], [0.0]])
    q = cols(2, [[-0.5], [0.0]])
    assert signed_permutation_equal(p, q, 1e-9)


def test_signed_permutation_reorder():
    p = cols(2, [[0.5, 0.0], [0.0, 0.3]])
    q = cols(2, [[0.0, 0.5], [0.3, 0.0]])
    assert signed_permutation_equal(p, q, 1e-9)


def test_signed_permutation_distinct():
    p = cols(2, [[0.5], [0.0]])
    q = cols(2, [[0.5], [0.1]])
    assert not signed_permutation_equal(p, q, 1e-6)


def test_signed_permutation_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        signed_permutation_equal(cols(2, [[0.5], [0.0]]), cols(3, [[0.5], [0.0], [0.0]]), 1e-9)


def test_signed_permutation_properties():
    gen = np.random.default_rng(3)
    for _ in range(50):
        k = int(gen.integers(1, 4))
        m = int(gen.integers(1, 5))
        c = gen.uniform(-0.5, 0.5, (k, m))
        c[:, np.linalg.norm(c, axis=0) == 0] += 0.1
        p = cols(k, c)
        perm = gen.permutation(m)
        signs = gen.choice([-1.0, 1.0], m)
        q = cols(k, c[:, perm] * signs)
        assert signed_permutation_equal(p, p, 1e-12)
        assert signed_permutation_equal(p, q, 1e-9)
        assert signed_permutation_equal(q, p, 1e-9)


def test_gram_row_column_spectra_agree():
    # nonzero eigenvalues of A A^T and A^T A coincide
    gen = np.random.default_rng(19)
    for _ in range(40):
        k = int(gen.integers(1, 7))
        m = int(gen.integers(1, 13))
        a = gen.standard_normal((k, m))
        left = sym_eigenvalues(gram(a))
        right = sym_eigenvalues(gram(a.T))
        r = min(k, m)
        assert np.allclose(left[:r], right[:r], atol=1e-8 * (1 + left[0]))
        if k < m:
            assert np.all(np.abs(right[r:]) <= 1e-8 * (1 + left[0]))


def test_append_column_monotone_log_det():
    gen = np.random.default_rng(23)
    for _ in range(100):
        k = int(gen.integers(1, 4))
        m = int(gen.integers(1, 5))
        a = gen.standard_normal((k, m))
        a *= 0.99 / math.sqrt(max(operator_norm(gram(a)), 1e-12))
        extra = gen.uniform(-0.05, 0.05, (k, 1))
        before = log_det_complement(gram(a))
        after = log_det_complement(gram(np.hstack([a, extra])))
        assert after <= before + 1e-12


def test_nested_row_blocks_monotone_det():
    gen = np.random.default_rng(29)
    for _ in range(100):
        n = int(gen.integers(2, 6))
        m = gen.standard_normal((n, n))
        m *= 0.99 / math.sqrt(max(operator_norm(gram(m)), 1e-12))
        dets = []
        for k in range(1, n + 1):
            block = m[:k, :]
            lam = sym_eigenvalues(gram(block))
            dets.append(float(np.prod(1.0 - lam)))
        for a, b in zip(dets, dets[1:]):
            assert b <= a + 1e-12


def test_midpoint_convexity_of_neg_log_det():
    gen = np.random.default_rng(31)
    for _ in range(100):
        k = int(gen.integers(1, 4))
        m = int(gen.integers(1, 6))
        a = gen.standard_normal((k, m))
        b = gen.standard_normal((k, m))
        a *= 0.95 / math.sqrt(max(operator_norm(gram(a)), 1e-12))
        b *= 0.95 / math.sqrt(max(operator_norm(gram(b)), 1e-12))
        va = -log_det_complement(gram(a))
        vb = -log_det_complement(gram(b))
        vm = -log_det_complement(gram(0.5 * (a + b)))
        assert vm <= 0.5 * (va + vb) + 1e-12

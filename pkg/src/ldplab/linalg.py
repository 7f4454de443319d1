"""Dense symmetric linear algebra used throughout the package.

Matrices are plain float64 numpy arrays.  A k x n matrix stands for k row
vectors in R^n; its Gram matrix is A A^T.  Symmetric PSD matrices carry an
eigendecomposition computed once at construction, so every downstream
operation (operator norm, log-determinants, square roots) is a cheap lookup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalFailure

# Eigenvalues of a Gram matrix are >= 0 in exact arithmetic; anything more
# negative than this is treated as a genuine failure, anything above is
# clamped to zero.
NEG_EIG_TOL = 1e-10

# Operator norms within this distance of 1 are classified as "on the
# boundary": log det(I - S) is reported as -inf there.
BOUNDARY_TOL = 1e-12


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite 2-d float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


@dataclass(frozen=True)
class SymmetricPSD:
    """Symmetric positive semi-definite matrix with cached spectrum.

    ``eigenvalues`` are sorted non-increasing and clamped to [0, inf);
    ``eigenvectors[:, i]`` corresponds to ``eigenvalues[i]``.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, s) -> "SymmetricPSD":
        s = as_matrix(s)
        if s.shape[0] != s.shape[1]:
            raise DimensionMismatch("matrix is not square")
        # store the symmetric part exactly once
        s = 0.5 * (s + s.T)
        try:
            vals, vecs = np.linalg.eigh(s)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
        vals = vals[::-1].copy()
        vecs = vecs[:, ::-1].copy()
        if vals.size and vals[-1] < -NEG_EIG_TOL * max(1.0, abs(vals[0])):
            raise NumericalFailure(
                f"matrix is not PSD: smallest eigenvalue {vals[-1]:.3e}"
            )
        np.clip(vals, 0.0, None, out=vals)
        return cls(matrix=s, eigenvalues=vals, eigenvectors=vecs)


def gram(a) -> SymmetricPSD:
    """Gram matrix A A^T of the rows of ``a``.

    The accumulation order is the fixed row-major order of ``np.matmul``,
    so repeated calls on identical input are bit-identical.
    """
    a = as_matrix(a)
    if a.shape[0] < 1:
        raise DimensionMismatch("need at least one row")
    if a.shape[1] == 0:
        return SymmetricPSD.from_matrix(np.zeros((a.shape[0], a.shape[0])))
    return SymmetricPSD.from_matrix(a @ a.T)


def sym_eigenvalues(s: SymmetricPSD) -> np.ndarray:
    """Eigenvalues of ``s``, sorted non-increasing."""
    return s.eigenvalues.copy()


def operator_norm(s: SymmetricPSD) -> float:
    """Largest eigenvalue of a PSD matrix."""
    if s.eigenvalues.size == 0:
        return 0.0
    return float(s.eigenvalues[0])


def log_det_complement(s: SymmetricPSD) -> float:
    """log det(I - S) = sum_i log(1 - lambda_i), or -inf.

    Returns -inf as soon as the top eigenvalue reaches 1 within
    ``BOUNDARY_TOL``; Haar-orthonormal Gram matrices land there exactly.
    """
    lam = s.eigenvalues
    if lam.size == 0:
        return 0.0
    if lam[0] >= 1.0 - BOUNDARY_TOL:
        return float("-inf")
    return float(np.sum(np.log1p(-lam)))


def psd_sqrt(s: SymmetricPSD) -> SymmetricPSD:
    """Symmetric PSD square root R with R R = S."""
    root = np.sqrt(s.eigenvalues)
    r = (s.eigenvectors * root) @ s.eigenvectors.T
    return SymmetricPSD.from_matrix(r)


@dataclass(frozen=True)
class ColumnList:
    """Finite list of nonzero columns in R^k standing for a k x infinity
    matrix padded with zero columns.

    ``columns`` has shape (dim, count).  Zero columns are dropped by the
    factory; each kept column has Euclidean norm in (0, sqrt(dim)].
    """

    dim: int
    columns: np.ndarray

    @property
    def count(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def from_columns(cls, dim: int, columns) -> "ColumnList":
        if dim < 1:
            raise DimensionMismatch("dim must be >= 1")
        cols = np.asarray(columns, dtype=np.float64)
        if cols.size == 0:
            cols = np.zeros((dim, 0))
        if cols.ndim == 1:
            cols = cols.reshape(dim, -1)
        if cols.shape[0] != dim:
            raise DimensionMismatch(
                f"columns live in R^{cols.shape[0]}, expected R^{dim}"
            )
        if not np.all(np.isfinite(cols)):
            raise ValueError("column entries must be finite")
        norms = np.linalg.norm(cols, axis=0)
        cols = cols[:, norms > 0.0]
        if cols.size and np.max(np.linalg.norm(cols, axis=0)) > np.sqrt(dim) + 1e-9:
            raise ValueError("column norm exceeds sqrt(dim)")
        return cls(dim=dim, columns=cols)

    @classmethod
    def empty(cls, dim: int) -> "ColumnList":
        return cls.from_columns(dim, np.zeros((dim, 0)))

    def matrix(self) -> np.ndarray:
        """The dense k x count block holding all nonzero columns."""
        return self.columns.copy()

    def prefix(self, ell: int) -> np.ndarray:
        """First ``ell`` columns as a dense k x ell block."""
        return self.columns[:, :ell].copy()


def _match_columns(cols_p, cols_q, used, idx, tol) -> bool:
    # depth-first signed matching; candidate q-columns are pre-restricted to
    # compatible norms so ties only branch within small equal-norm groups
    if idx == len(cols_p):
        return True
    p = cols_p[idx]
    np_norm = np.linalg.norm(p)
    for j, q in enumerate(cols_q):
        if used[j]:
            continue
        if abs(np.linalg.norm(q) - np_norm) > tol:
            continue
        if min(np.linalg.norm(p - q), np.linalg.norm(p + q)) <= tol:
            used[j] = True
            if _match_columns(cols_p, cols_q, used, idx + 1, tol):
                return True
            used[j] = False
    return False


def _sorted_columns(cl: ColumnList):
    cols = [cl.columns[:, j] for j in range(cl.count)]
    # norm descending, then lexicographic on absolute entries: deterministic
    # and independent of column signs
    cols.sort(key=lambda c: (-np.linalg.norm(c), tuple(-np.abs(c))))
    return cols


def signed_permutation_equal(p: ColumnList, q: ColumnList, tol: float) -> bool:
    """True iff the columns of ``p`` and ``q`` match bijectively up to sign.

    Each column c of ``p`` must pair with a distinct column of ``q`` equal to
    +-c within Euclidean distance ``tol``.  Columns are processed in
    (norm desc, lexicographic) order with backtracking on equal-norm ties.
    """
    if p.dim != q.dim:
        raise DimensionMismatch("column lists live in different dimensions")
    if p.count != q.count:
        return False
    cols_p = _sorted_columns(p)
    cols_q = _sorted_columns(q)
    used = [False] * len(cols_q)
    return _match_columns(cols_p, cols_q, used, 0, tol)

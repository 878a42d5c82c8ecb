"""Dense matrix kernels: Khatri-Rao and Hadamard products, Jacobi SVD, and friends.

Vectorization conventions
-------------------------
Two flattenings of a ``k x d`` matrix appear in this package:

* :func:`vec` stacks *columns* (Fortran order). This is the convention under
  which ``kron(a, b) @ vec(M) == b @ M @ a`` holds.
* :func:`vect` stacks *rows* (C order), i.e. ``vect(W) == vec(W.T)``. The
  Jacobian of the network is laid out in blocks of ``d`` entries, one block per
  hidden unit, so gradients with respect to ``W`` are flattened with
  :func:`vect`. Equivalently, column ``i`` of the Jacobian is the Kronecker
  product of ``v * phi'(W x_i)`` with ``x_i``, which is what
  :func:`khatri_rao` produces.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, DimensionError, ParseError, RankDeficiencyError

SVD_TOL = 1e-12
SVD_MAX_SWEEPS = 100


def as_matrix(a, name="matrix"):
    """Validate and return ``a`` as a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def vec(M):
    """Column-stacking vectorization."""
    return np.asarray(M).reshape(-1, order="F")


def vect(M):
    """Row-stacking vectorization, matching the Jacobian block layout."""
    return np.asarray(M).reshape(-1)


def khatri_rao(A, B):
    """Column-wise Kronecker product of ``A`` (m x p) and ``B`` (n x p).

    Column ``j`` of the ``mn x p`` result is ``kron(A[:, j], B[:, j])``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError("khatri_rao expects 2-D inputs")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(
            f"khatri_rao needs equal column counts, got {A.shape[1]} and {B.shape[1]}"
        )
    m, p = A.shape
    n = B.shape[0]
    return (A[:, None, :] * B[None, :, :]).reshape(m * n, p)


def hadamard(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionError(f"hadamard needs equal shapes, got {A.shape} and {B.shape}")
    return A * B


def block_diag_copies(M, copies):
    """Block-diagonal matrix with ``copies`` copies of ``M`` on the diagonal."""
    return np.kron(np.eye(copies), np.asarray(M, dtype=float))


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``A = U @ diag(singular_values) @ V.T``."""

    singular_values: np.ndarray
    U: np.ndarray
    V: np.ndarray
    sweeps: int = 0

    @property
    def sigma_max(self):
        return float(self.singular_values[0])

    @property
    def sigma_min(self):
        return float(self.singular_values[-1])

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.V.T


def _complete_columns(Q, mask):
    """Replace the columns of ``Q`` flagged by ``mask`` with an orthonormal completion."""
    if not mask.any():
        return Q
    keep = Q[:, ~mask]
    m = Q.shape[0]
    basis, _ = np.linalg.qr(np.hstack([keep, np.eye(m)]))
    extra = basis[:, keep.shape[1]:keep.shape[1] + int(mask.sum())]
    Q = Q.copy()
    Q[:, mask] = extra
    return Q


def svd(A, tol=SVD_TOL, max_sweeps=SVD_MAX_SWEEPS):
    """Thin singular value decomposition by one-sided Jacobi rotations.

    Singular values come back sorted in non-increasing order. Raises
    :class:`ConvergenceError` when the off-diagonal mass is still above ``tol``
    after ``max_sweeps`` sweeps.
    """
    A = as_matrix(A)
    transposed = A.shape[0] < A.shape[1]
    work = np.ascontiguousarray(A.T if transposed else A, dtype=float).copy()
    noise = work.shape[0] * np.finfo(float).eps * np.linalg.norm(work)
    V, sweeps, converged = kernels.jacobi_svd(work, tol, max_sweeps)
    if not converged:
        raise ConvergenceError(
            f"Jacobi SVD did not converge within {max_sweeps} sweeps for shape {A.shape}"
        )
    V = np.asarray(V)
    s = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    V = V[:, order]
    # the kernel leaves columns below the noise level unrotated; treat them as zero
    zero = s <= max(noise, np.finfo(float).tiny)
    s = np.where(zero, 0.0, s)
    U = np.divide(work, np.where(zero, 1.0, s))
    U = _complete_columns(U, zero)
    if transposed:
        U, V = V, U
    return SvdResult(singular_values=s, U=U, V=V, sweeps=int(sweeps))


def singular_values(A):
    return svd(A).singular_values


def sigma_min(A):
    return svd(A).sigma_min


def sigma_max(A):
    return svd(A).sigma_max


def nuclear_norm(A):
    return float(np.sum(svd(A).singular_values))


def rank_tolerance(s, shape):
    """Threshold below which a singular value counts as zero."""
    return 1e-10 * (float(s[0]) if len(s) else 0.0) * max(shape)


def numerical_rank(A):
    res = svd(A)
    s = res.singular_values
    return int(np.sum(s > rank_tolerance(s, np.shape(A))))


def has_full_column_rank(A):
    A = as_matrix(A)
    if A.shape[0] < A.shape[1]:
        return False
    s = svd(A).singular_values
    return bool(s[-1] > rank_tolerance(s, A.shape))


def pseudo_left_inverse(A):
    """Left inverse ``M`` (d x k) of a full-column-rank ``A`` (k x d): ``M @ A == I``.

    Raises :class:`RankDeficiencyError` otherwise; callers use this to branch
    between the full-rank and rank-deficient cases of the saddle analysis.
    """
    A = as_matrix(A)
    k, d = A.shape
    if k < d:
        raise RankDeficiencyError(f"{k}x{d} matrix cannot have full column rank", rank=None)
    res = svd(A)
    s = res.singular_values
    tol = rank_tolerance(s, A.shape)
    if s[-1] <= tol:
        raise RankDeficiencyError(
            f"matrix is rank deficient (sigma_min={s[-1]:.3e} <= {tol:.3e})",
            rank=int(np.sum(s > tol)),
        )
    return (res.V / s) @ res.U.T


def symmetric_eigvalsh(H):
    """Eigenvalues (ascending) of a symmetric matrix via LAPACK."""
    H = np.asarray(H, dtype=float)
    return np.linalg.eigvalsh(0.5 * (H + H.T))


def write_matrix_csv(path, M):
    """Write a matrix as CSV: one row per line, round-trip (17 digit) precision."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in M:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def parse_csv_row(text, path=None, line=None):
    try:
        return [float(tok) for tok in text.strip().split(",")]
    except ValueError as exc:
        raise ParseError(f"bad number in row ({exc})", path, line) from None


def read_matrix_csv(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            rows.append(parse_csv_row(text, path, lineno))
            if len(rows[-1]) != len(rows[0]):
                raise ParseError("ragged row", path, lineno)
    if not rows:
        raise ParseError("empty matrix file", path, 1)
    return np.array(rows)

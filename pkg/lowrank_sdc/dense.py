"""Dense matrix kernels: pivoted QR, SVD, dense and Kronecker-structured solves.

Every routine accepts real or complex arrays and keeps the input's field:
a real input never produces complex storage.
"""

import enum
import logging
import warnings
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg as la

from solver_config import DENSE_SOLVE_RTOL, QR_RANK_RTOL
from .errors import InvalidInputError, SingularSystemError

logger = logging.getLogger(__name__)


class ScalarField(enum.Enum):
    """Scalar field of a problem; decides dtypes and inner-product conjugation"""

    REAL = "real"
    COMPLEX = "complex"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64) if self is ScalarField.REAL else np.dtype(np.complex128)

    @property
    def tag(self) -> int:
        """Byte tag used by the reference cache format."""
        return 0 if self is ScalarField.REAL else 1

    @classmethod
    def from_tag(cls, tag: int) -> "ScalarField":
        if tag == 0:
            return cls.REAL
        if tag == 1:
            return cls.COMPLEX
        raise InvalidInputError(f"Unknown scalar field tag {tag}")

    @classmethod
    def of(cls, array: np.ndarray) -> "ScalarField":
        return cls.COMPLEX if np.iscomplexobj(array) else cls.REAL


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a 2-D float64/complex128 array, rejecting NaN/Inf."""
    arr = np.asarray(M)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    dtype = np.complex128 if np.iscomplexobj(arr) else np.float64
    arr = arr.astype(dtype, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Frobenius inner product <A, B>, conjugating the first argument."""
    if A.shape != B.shape:
        raise InvalidInputError(f"inner product of shapes {A.shape} and {B.shape}")
    return np.vdot(A, B)


def qr_column_pivoted(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-pivoted QR truncated to numerical rank.

    Returns ``(Q, R, P)`` with ``M[:, P] ~= Q @ R``. Columns whose pivot
    satisfies ``|R_ii| <= QR_RANK_RTOL * |R_00|`` are dropped, so ``Q`` has
    as many columns as the numerical rank (possibly zero).
    """
    M = as_matrix(M)
    if M.shape[1] < 1:
        raise InvalidInputError("qr_column_pivoted needs at least one column")
    Q, R, P = la.qr(M, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(diag > QR_RANK_RTOL * diag[0]))
    return Q[:, :rank], R[:rank, :], P


def svd(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduced SVD ``M = U diag(s) V^H`` with ``s`` nonincreasing.

    Note the third factor is ``V`` (not ``V^H``).
    """
    M = as_matrix(M)
    if min(M.shape) == 0:
        return (
            np.zeros((M.shape[0], 0), dtype=M.dtype),
            np.zeros(0),
            np.zeros((M.shape[1], 0), dtype=M.dtype),
        )
    try:
        U, s, Vh = la.svd(M, full_matrices=False, check_finite=False, lapack_driver="gesdd")
    except la.LinAlgError:
        logger.warning("gesdd did not converge; retrying SVD with gesvd")
        U, s, Vh = la.svd(M, full_matrices=False, check_finite=False, lapack_driver="gesvd")
    return U, s, Vh.conj().T


def solve_dense(A, B) -> np.ndarray:
    """Solve ``A X = B`` for square ``A`` by LU with partial pivoting."""
    A = as_matrix(A, "A")
    B = np.asarray(B)
    vector_rhs = B.ndim == 1
    B = as_matrix(B.reshape(-1, 1) if vector_rhs else B, "B")
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"solve_dense needs a square matrix, got {A.shape}")
    if A.shape[0] != B.shape[0]:
        raise InvalidInputError(f"solve_dense shape mismatch {A.shape} vs {B.shape}")
    if A.shape[0] == 0:
        return B.copy()

    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            X = la.solve(A, B, check_finite=False)
        except (la.LinAlgError, la.LinAlgWarning):
            cond = float(np.linalg.cond(A))
            raise SingularSystemError(f"dense {A.shape[0]}x{A.shape[0]} system is singular", cond)

    b_norm = np.linalg.norm(B)
    residual = np.linalg.norm(A @ X - B)
    if b_norm > 0 and residual > DENSE_SOLVE_RTOL * b_norm:
        cond = float(np.linalg.cond(A))
        raise SingularSystemError(
            f"dense solve residual {residual / b_norm:.3e} exceeds {DENSE_SOLVE_RTOL:.1e}", cond
        )
    return X.ravel() if vector_rhs else X


def kron_sum_matrix(
    left: Sequence[np.ndarray], right: Sequence[np.ndarray], shift: complex
) -> np.ndarray:
    """Assemble ``I - shift * sum_j kron(right_j, left_j)``.

    With column-major vectorization this is the matrix of
    ``X -> X - shift * sum_j left_j X right_j^T``.
    """
    if len(left) != len(right):
        raise InvalidInputError(f"{len(left)} left factors vs {len(right)} right factors")
    n_left = left[0].shape[0] if left else 0
    n_right = right[0].shape[0] if right else 0
    dtype = np.result_type(*left, *right, np.asarray(shift), np.float64)
    K = np.eye(n_left * n_right, dtype=dtype)
    for A_j, B_j in zip(left, right):
        K -= shift * np.kron(B_j, A_j)
    return K


def solve_kron_sum(
    left: Sequence[np.ndarray], right: Sequence[np.ndarray], shift: complex, rhs: np.ndarray
) -> np.ndarray:
    """Solve ``X - shift * sum_j left_j X right_j^T = rhs`` by vectorization."""
    rhs = as_matrix(rhs, "rhs")
    system = kron_sum_matrix(left, right, shift)
    if system.shape[0] != rhs.size:
        raise InvalidInputError(f"Kronecker system of size {system.shape[0]} vs rhs {rhs.shape}")
    x = solve_dense(system, rhs.reshape(-1, order="F"))
    return x.reshape(rhs.shape, order="F")

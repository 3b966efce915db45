"""Low-rank factorizations, singular-value thresholding and rounded sums."""

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from solver_config import SVD_ZERO_RTOL
from .dense import ScalarField, qr_column_pivoted, svd
from .errors import InvalidInputError, InvalidParameterError

logger = logging.getLogger(__name__)

# Relative slack when comparing a truncation error against eps**2.
_THRESHOLD_SLACK = 8.0 * np.finfo(np.float64).eps


class TruncationMode(enum.Enum):
    """Hard or soft singular-value thresholding"""

    HARD = "hard"
    SOFT = "soft"

    @property
    def label(self) -> str:
        """Single-letter suffix used in scheme labels (SDC-mBUG-3-H)."""
        return "H" if self is TruncationMode.HARD else "S"

    @classmethod
    def parse(cls, value: Union[str, "TruncationMode"]) -> "TruncationMode":
        if isinstance(value, TruncationMode):
            return value
        key = str(value).strip().lower()
        if key in ("hard", "h"):
            return cls.HARD
        if key in ("soft", "s"):
            return cls.SOFT
        raise InvalidParameterError(f"Unknown truncation mode '{value}' (expected hard or soft)")


@dataclass(frozen=True)
class Factorization:
    """SVD-form low-rank matrix ``U diag(S) V^H``.

    ``U`` (m1 x r) and ``V`` (m2 x r) have orthonormal columns, ``S`` is
    nonincreasing and nonnegative. Rank-0 factorizations keep their shape
    through empty factors.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self) -> int:
        return int(self.S.shape[0])

    @property
    def dtype(self) -> np.dtype:
        return np.result_type(self.U, self.V)

    @property
    def field(self) -> ScalarField:
        return ScalarField.COMPLEX if np.issubdtype(self.dtype, np.complexfloating) else ScalarField.REAL

    def norm(self) -> float:
        """Frobenius norm (exact for orthonormal factors)."""
        return float(np.linalg.norm(self.S))

    def to_dense(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.conj().T

    def scaled(self, c: complex) -> "Factorization":
        """Return ``c * self`` with the sign/phase of ``c`` folded into ``U``."""
        if c == 0 or self.rank == 0:
            return Factorization.zeros(*self.shape, dtype=self.dtype)
        magnitude = abs(c)
        phase = c / magnitude
        if np.isrealobj(self.U) and np.iscomplexobj(phase):
            if np.imag(phase) != 0.0:
                return Factorization(self.U * phase, self.S * magnitude, self.V.astype(np.complex128))
            phase = np.real(phase)
        return Factorization(self.U * phase, self.S * magnitude, self.V)

    def check(self, tol: float = 1e-10) -> None:
        """Raise InvalidInputError if an invariant does not hold."""
        r = self.rank
        if self.U.shape[1] != r or self.V.shape[1] != r:
            raise InvalidInputError(f"factor widths {self.U.shape[1]}, {self.V.shape[1]} vs rank {r}")
        if r > min(self.shape):
            raise InvalidInputError(f"rank {r} exceeds min{self.shape}")
        if np.any(self.S < 0) or np.any(np.diff(self.S) > 0):
            raise InvalidInputError("singular values must be nonnegative and nonincreasing")
        eye = np.eye(r)
        if np.linalg.norm(self.U.conj().T @ self.U - eye) > tol:
            raise InvalidInputError("U does not have orthonormal columns")
        if np.linalg.norm(self.V.conj().T @ self.V - eye) > tol:
            raise InvalidInputError("V does not have orthonormal columns")

    @classmethod
    def zeros(cls, m1: int, m2: int, dtype=np.float64) -> "Factorization":
        return cls(np.zeros((m1, 0), dtype=dtype), np.zeros(0), np.zeros((m2, 0), dtype=dtype))

    @classmethod
    def from_dense(cls, M) -> "Factorization":
        """Exact SVD factorization of a dense matrix, dropping zero singular values."""
        U, s, V = svd(M)
        keep = s > 0.0
        return cls(U[:, keep], s[keep], V[:, keep])


class FactoredTerm(NamedTuple):
    """A term ``U diag(S) V^H`` whose factors need not be orthonormal."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


LowRankTerm = Union[Factorization, FactoredTerm]


def _check_alpha(alpha: float) -> None:
    if alpha < 0 or not np.isfinite(alpha):
        raise InvalidParameterError(f"threshold alpha must be finite and >= 0, got {alpha}")


def hard_shrink(F: Factorization, alpha: float) -> Factorization:
    """Drop singular values ``<= alpha``; keep the others unchanged."""
    _check_alpha(alpha)
    keep = F.S > alpha
    return Factorization(F.U[:, keep], F.S[keep], F.V[:, keep])


def soft_shrink(F: Factorization, alpha: float) -> Factorization:
    """Replace each singular value by ``max(sigma - alpha, 0)`` and drop zeros."""
    _check_alpha(alpha)
    shrunk = F.S - alpha
    keep = shrunk > 0.0
    return Factorization(F.U[:, keep], shrunk[keep], F.V[:, keep])


def hard_tail(S: np.ndarray, beta: float) -> float:
    """Squared hard-truncation error: sum of sigma**2 over sigma <= beta."""
    S = np.asarray(S, dtype=np.float64)
    return float(np.sum(S[S <= beta] ** 2))


def soft_tail(S: np.ndarray, beta: float) -> float:
    """Squared soft-truncation error: tail plus beta**2 per retained value."""
    S = np.asarray(S, dtype=np.float64)
    return hard_tail(S, beta) + float(np.count_nonzero(S > beta)) * beta**2


def select_threshold(S, eps: float, mode: TruncationMode) -> float:
    """Largest ``beta >= 0`` whose truncation error does not exceed ``eps``.

    Hard: ``beta`` is picked among ``{0} U {sigma_j}``. Soft: the piecewise
    quadratic ``tail + k * beta**2 = eps**2`` is solved in closed form on the
    bracketing interval between consecutive singular values.
    """
    if eps < 0:
        raise InvalidParameterError(f"tolerance must be >= 0, got {eps}")
    S = np.sort(np.asarray(S, dtype=np.float64))
    S = S[S > 0.0]
    if eps == 0.0 or S.size == 0:
        return 0.0
    budget = eps * eps * (1.0 + _THRESHOLD_SLACK)

    # breakpoints (ascending, distinct) and the error at each of them
    breaks = np.unique(S)
    squares = S**2
    upto = np.searchsorted(S, breaks, side="right")
    tails = np.concatenate(([0.0], np.cumsum(squares)))[upto]

    if mode is TruncationMode.HARD:
        feasible = breaks[tails <= budget]
        return float(feasible[-1]) if feasible.size else 0.0

    above = S.size - upto
    soft_values = tails + above * breaks**2
    feasible = np.nonzero(soft_values <= budget)[0]
    if feasible.size and above[feasible[-1]] == 0:
        # every singular value can be zeroed
        return float(breaks[-1])
    if feasible.size:
        idx = feasible[-1]
        tail, k, lower, upper = tails[idx], above[idx], breaks[idx], breaks[idx + 1]
    else:
        tail, k, lower, upper = 0.0, S.size, 0.0, breaks[0]
    beta = np.sqrt(max(eps * eps - tail, 0.0) / k)
    return float(min(max(beta, lower), upper))


def truncate(F: Factorization, eps: float, mode: TruncationMode) -> Factorization:
    """Tolerance-driven truncation: ``||F - truncate(F)|| <= eps``."""
    alpha = select_threshold(F.S, eps, mode)
    if mode is TruncationMode.HARD:
        return hard_shrink(F, alpha)
    return soft_shrink(F, alpha)


def truncate_dense(
    M: np.ndarray, eps: float, mode: TruncationMode, zero_scale: Optional[float] = None
) -> Factorization:
    """SVD a small dense matrix, discard numerical zeros, then truncate.

    Singular values ``<= SVD_ZERO_RTOL * zero_scale`` are treated as exact
    zeros (cancellation noise); ``zero_scale`` defaults to the largest
    singular value.
    """
    U, s, V = svd(M)
    if zero_scale is None:
        zero_scale = float(s[0]) if s.size else 0.0
    keep = (s > SVD_ZERO_RTOL * zero_scale) & (s > 0.0)
    return truncate(Factorization(U[:, keep], s[keep], V[:, keep]), eps, mode)


def orthonormal_basis(blocks: Sequence[np.ndarray], rows: int, dtype=np.float64) -> np.ndarray:
    """Orthonormal basis of the column span of ``[blocks...]`` via pivoted QR."""
    nonempty = [b for b in blocks if b.shape[1] > 0]
    if not nonempty:
        return np.zeros((rows, 0), dtype=dtype)
    Q, _, _ = qr_column_pivoted(np.hstack(nonempty))
    return Q


def basis_defect(W: np.ndarray, F: LowRankTerm) -> float:
    """Relative norm of the part of ``F`` outside ``range(W)`` (column side)."""
    if F.S.shape[0] == 0:
        return 0.0
    weighted = F.U * F.S
    outside = weighted - W @ (W.conj().T @ weighted)
    scale = np.linalg.norm(weighted)
    return float(np.linalg.norm(outside) / scale) if scale > 0 else 0.0


def _unpivot(R: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Return ``R P^T``: the triangular factor with columns back in input order."""
    out = np.empty_like(R)
    out[:, P] = R
    return out


def rounded_sum(terms: Sequence[LowRankTerm], eps: float, mode: TruncationMode) -> Factorization:
    """Recompress ``sum(terms)`` into one factorization within ``eps``.

    Concatenate the factors, pivoted-QR both sides, truncate the small core
    ``R_1 P_1^T diag(S) P_2 R_2^T`` and multiply the bases back.
    """
    if not terms:
        raise InvalidInputError("rounded_sum needs at least one term")
    m1, m2 = terms[0].U.shape[0], terms[0].V.shape[0]
    for term in terms:
        if term.U.shape[0] != m1 or term.V.shape[0] != m2:
            raise InvalidInputError(
                f"term of shape ({term.U.shape[0]}, {term.V.shape[0]}) in a sum of shape ({m1}, {m2})"
            )
        if term.U.shape[1] != term.S.shape[0] or term.V.shape[1] != term.S.shape[0]:
            raise InvalidInputError("term factors and singular values disagree in rank")

    dtype = np.result_type(*[t.U for t in terms], *[t.V for t in terms], np.float64)
    live = [t for t in terms if t.S.shape[0] > 0]
    if not live:
        return Factorization.zeros(m1, m2, dtype=dtype)

    U_hat = np.hstack([t.U for t in live]).astype(dtype, copy=False)
    S_hat = np.concatenate([t.S for t in live])
    V_hat = np.hstack([t.V for t in live]).astype(dtype, copy=False)

    Q1, R1, P1 = qr_column_pivoted(U_hat)
    Q2, R2, P2 = qr_column_pivoted(V_hat)
    if Q1.shape[1] == 0 or Q2.shape[1] == 0:
        return Factorization.zeros(m1, m2, dtype=dtype)

    core = (_unpivot(R1, P1) * S_hat) @ _unpivot(R2, P2).conj().T
    zero_scale = float(sum(np.linalg.norm(t.U * t.S, 2) * np.linalg.norm(t.V, 2) for t in live))
    small = truncate_dense(core, eps, mode, zero_scale=zero_scale)
    result = Factorization(Q1 @ small.U, small.S, Q2 @ small.V)
    logger.debug(f"rounded_sum: {len(terms)} terms, {S_hat.size} cols -> rank {result.rank} (eps={eps:.2e})")
    return result

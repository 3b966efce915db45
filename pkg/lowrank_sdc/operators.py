"""Linear matrix ODE model ``F(X, t) = sum_j A_j X B_j^T + G(t)``."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .dense import ScalarField, as_matrix
from .errors import InvalidInputError
from .lowrank import FactoredTerm, Factorization, TruncationMode, rounded_sum

logger = logging.getLogger(__name__)


class CoefficientOperator:
    """Linear map on column blocks with an optional explicit dense form.

    ``apply`` takes an (n x k) block and returns its (n x k) image. Solvers
    only ever call ``matmat``/``conj_matmat``; the dense form is used by
    oracles and the optional Jacobi preconditioner.
    """

    def __init__(
        self,
        dimension: int,
        apply: Callable[[np.ndarray], np.ndarray],
        dense: Optional[np.ndarray] = None,
        name: str = "op",
    ):
        self.dimension = int(dimension)
        self._apply = apply
        self._dense = dense
        self.name = name

    def __repr__(self) -> str:
        return f"CoefficientOperator({self.name}, n={self.dimension})"

    @classmethod
    def from_dense(cls, M, name: str = "dense") -> "CoefficientOperator":
        M = as_matrix(M, name)
        if M.shape[0] != M.shape[1]:
            raise InvalidInputError(f"coefficient operator {name} must be square, got {M.shape}")
        return cls(M.shape[0], lambda X: M @ X, dense=M, name=name)

    @classmethod
    def identity(cls, n: int) -> "CoefficientOperator":
        return cls(n, lambda X: X, dense=None, name="I")

    @classmethod
    def diagonal_of(cls, d, name: str = "diag") -> "CoefficientOperator":
        d = np.asarray(d)
        return cls(d.shape[0], lambda X: d[:, None] * X, dense=None, name=name)

    def matmat(self, X: np.ndarray) -> np.ndarray:
        if X.shape[0] != self.dimension:
            raise InvalidInputError(f"{self.name}: block has {X.shape[0]} rows, expected {self.dimension}")
        return self._apply(X)

    def conj_matmat(self, X: np.ndarray) -> np.ndarray:
        """``conj(op) @ X`` using only the forward apply."""
        return np.conj(self.matmat(np.conj(X)))

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self._apply(np.eye(self.dimension))
        return self._dense

    def diagonal(self) -> np.ndarray:
        return np.diag(self.dense()).copy()


@dataclass(frozen=True)
class LinearMatrixODE:
    """Ordered terms ``(A_j, B_j)`` plus a low-rank source ``G(t)``.

    ``source`` returns a Factorization of shape (m1, m2) or None for
    ``G == 0``.
    """

    terms: Tuple[Tuple[CoefficientOperator, CoefficientOperator], ...]
    source: Optional[Callable[[float], Factorization]] = None
    field: ScalarField = ScalarField.REAL
    name: str = "ode"

    def __post_init__(self):
        if len(self.terms) < 1:
            raise InvalidInputError("a LinearMatrixODE needs at least one term")
        m1 = {A.dimension for A, _ in self.terms}
        m2 = {B.dimension for _, B in self.terms}
        if len(m1) != 1 or len(m2) != 1:
            raise InvalidInputError(f"inconsistent operator dimensions: A {m1}, B {m2}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.terms[0][0].dimension, self.terms[0][1].dimension)

    @property
    def dtype(self) -> np.dtype:
        return self.field.dtype

    def left_ops(self) -> List[CoefficientOperator]:
        return [A for A, _ in self.terms]

    def right_ops(self) -> List[CoefficientOperator]:
        return [B for _, B in self.terms]

    def source_at(self, t: float) -> Optional[Factorization]:
        if self.source is None:
            return None
        G = self.source(t)
        if G.shape != self.shape:
            raise InvalidInputError(f"source at t={t} has shape {G.shape}, expected {self.shape}")
        return G


def _check_shape(ode: LinearMatrixODE, shape: Tuple[int, int], what: str) -> None:
    if tuple(shape) != ode.shape:
        raise InvalidInputError(f"{what} has shape {tuple(shape)}, ODE expects {ode.shape}")


def apply_dense(ode: LinearMatrixODE, X: np.ndarray, t: float) -> np.ndarray:
    """Dense ``sum_j A_j X B_j^T + G(t)``."""
    X = np.asarray(X)
    _check_shape(ode, X.shape, "state")
    out = np.zeros(ode.shape, dtype=np.result_type(X, ode.dtype))
    for A, B in ode.terms:
        AX = A.matmat(X)
        out += B.matmat(AX.T).T
    G = ode.source_at(t)
    if G is not None:
        out += G.to_dense()
    return out


def lowrank_terms(ode: LinearMatrixODE, X: Factorization, t: float) -> List[FactoredTerm]:
    """Unrounded factored terms ``A_j U S (conj(B_j) V)^H`` and ``G(t)``."""
    _check_shape(ode, X.shape, "state")
    terms: List[FactoredTerm] = []
    if X.rank > 0:
        for A, B in ode.terms:
            terms.append(FactoredTerm(A.matmat(X.U), X.S, B.conj_matmat(X.V)))
    G = ode.source_at(t)
    if G is not None:
        terms.append(FactoredTerm(G.U, G.S, G.V))
    if not terms:
        terms.append(FactoredTerm(X.U, X.S, X.V))
    return terms


def eval_lowrank(
    ode: LinearMatrixODE, X: Factorization, t: float, eps: float, mode: TruncationMode
) -> Factorization:
    """Truncated low-rank evaluation of ``F(X, t)`` by rounded summation."""
    return rounded_sum(lowrank_terms(ode, X, t), eps, mode)


def project(op: CoefficientOperator, W: np.ndarray) -> np.ndarray:
    """Galerkin projection ``W^H op(W)`` onto an orthonormal basis."""
    if W.shape[0] != op.dimension:
        raise InvalidInputError(f"basis has {W.shape[0]} rows, operator dimension {op.dimension}")
    return W.conj().T @ op.matmat(W)


def project_terms(ode: LinearMatrixODE, U_hat: np.ndarray, V_hat: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Projected pairs ``(U^H A_j U, V^T B_j conj(V))`` for the S-step.

    With these, ``U^H (A_j X B_j^T) V = Ahat_j (U^H X V) Bhat_j^T``.
    """
    V_conj = np.conj(V_hat)
    left = [project(A, U_hat) for A in ode.left_ops()]
    right = [project(B, V_conj) for B in ode.right_ops()]
    return left, right


def projected_source(ode: LinearMatrixODE, t: float, U_hat: np.ndarray, V_hat: np.ndarray) -> Optional[np.ndarray]:
    """``U^H G(t) V`` computed in factored form."""
    G = ode.source_at(t)
    if G is None or G.rank == 0:
        return None
    return ((U_hat.conj().T @ G.U) * G.S) @ (G.V.conj().T @ V_hat)


def build_ode(
    pairs: Sequence[Tuple[CoefficientOperator, CoefficientOperator]],
    source: Optional[Callable[[float], Factorization]] = None,
    field: ScalarField = ScalarField.REAL,
    name: str = "ode",
) -> LinearMatrixODE:
    """Convenience constructor from a list of operator pairs."""
    return LinearMatrixODE(terms=tuple(pairs), source=source, field=field, name=name)

"""Solvers for the implicit linear systems of the mBUG step.

The K- and L-steps are tall generalized Sylvester equations
``K - dt * sum_j L_j(K) C_j = rhs`` with ``L_j`` an m x m operator known
only through its action and ``C_j`` small r x r coefficients; they are
solved matrix-free with restarted GMRES. The S-step is a small square
Sylvester equation solved directly through its Kronecker form.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

import solver_config
from models import SolveRecord
from .dense import as_matrix, solve_kron_sum
from .errors import CapacityError, InvalidInputError, InvalidParameterError, SolverFailureError
from .operators import LinearMatrixODE, project

logger = logging.getLogger(__name__)


class Side(enum.Enum):
    """Which basis-prediction solve of the mBUG step"""

    K = "k_step"
    L = "l_step"


@dataclass(frozen=True)
class SylvesterSpec:
    """``X - shift * sum_j left_j(X) right_j = rhs``.

    ``left_ops`` are callables acting on column blocks (or dense matrices);
    ``right_ops`` are small dense coefficient matrices multiplied from the
    right.
    """

    left_ops: Tuple[Callable[[np.ndarray], np.ndarray], ...]
    right_ops: Tuple[np.ndarray, ...]
    shift: float
    rhs: np.ndarray
    left_diagonals: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        if len(self.left_ops) != len(self.right_ops):
            raise InvalidInputError(
                f"{len(self.left_ops)} left operators vs {len(self.right_ops)} right coefficients"
            )
        r = self.rhs.shape[1]
        for C in self.right_ops:
            if C.shape != (r, r):
                raise InvalidInputError(f"right coefficient of shape {C.shape}, unknown has {r} columns")

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = X.copy()
        for L_j, C_j in zip(self.left_ops, self.right_ops):
            out -= self.shift * (L_j(X) @ C_j)
        return out

    def residual(self, X: np.ndarray) -> float:
        """Relative residual ``||apply(X) - rhs|| / ||rhs||``."""
        rhs_norm = np.linalg.norm(self.rhs)
        res = np.linalg.norm(self.apply(X) - self.rhs)
        return float(res / rhs_norm) if rhs_norm > 0 else float(res)

    def jacobi_diagonal(self) -> Optional[np.ndarray]:
        """Diagonal of the vectorized operator, if the left diagonals are known."""
        if self.left_diagonals is None:
            return None
        m, r = self.rhs.shape
        diag = np.ones((m, r), dtype=np.result_type(self.rhs, *self.left_diagonals, *self.right_ops))
        for d_j, C_j in zip(self.left_diagonals, self.right_ops):
            diag -= self.shift * np.outer(d_j, np.diag(C_j))
        return diag.reshape(-1, order="F")


def solve_s_step(
    Ahat: Sequence[np.ndarray],
    Bhat: Sequence[np.ndarray],
    dt: float,
    rhs: np.ndarray,
    rank_cap: Optional[int] = None,
) -> Tuple[np.ndarray, SolveRecord]:
    """Solve ``S - dt * sum_j Ahat_j S Bhat_j^T = rhs`` by a dense Kronecker solve."""
    rhs = as_matrix(rhs, "rhs")
    cap = solver_config.S_STEP_RANK_CAP if rank_cap is None else rank_cap
    if dt < 0:
        raise InvalidParameterError(f"step size must be >= 0, got {dt}")
    if max(rhs.shape) > cap:
        raise CapacityError(
            f"S-step of size {rhs.shape} exceeds the cap {cap}; "
            "increase the truncation tolerances (constant C) to keep ranks smaller"
        )
    if len(Ahat) != len(Bhat):
        raise InvalidInputError(f"{len(Ahat)} left vs {len(Bhat)} right projected operators")

    if dt == 0.0 or rhs.size == 0:
        return rhs.copy(), SolveRecord(kind="s_step", size=rhs.size, residual=0.0,
                                       tolerance=solver_config.DENSE_SOLVE_RTOL)

    S = solve_kron_sum(Ahat, Bhat, dt, rhs)
    residual = S.copy()
    for A_j, B_j in zip(Ahat, Bhat):
        residual -= dt * (A_j @ S @ B_j.T)
    rhs_norm = np.linalg.norm(rhs)
    rel = float(np.linalg.norm(residual - rhs) / rhs_norm) if rhs_norm > 0 else 0.0
    logger.debug(f"S-step {rhs.shape}: relative residual {rel:.2e}")
    return S, SolveRecord(kind="s_step", size=rhs.size, residual=rel,
                          tolerance=solver_config.DENSE_SOLVE_RTOL)


def tall_solve_tolerance(rhs_norm: float, eps_min: float) -> float:
    """Relative residual target tied to the smallest active truncation tolerance."""
    floor = solver_config.KRYLOV_TOL_FLOOR
    if rhs_norm <= 0 or eps_min <= 0:
        return floor
    return max(solver_config.KRYLOV_TOL_FACTOR * eps_min / rhs_norm, floor)


def _fixed_point(spec: SylvesterSpec, X: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, float, int]:
    """Identity-shift iteration ``X <- rhs + shift * sum_j L_j(X) C_j``."""
    residual = spec.residual(X)
    for it in range(1, max_iter + 1):
        if residual <= tol:
            return X, residual, it - 1
        X = spec.rhs + (X - spec.apply(X))
        new_residual = spec.residual(X)
        if not np.isfinite(new_residual) or new_residual > 1e3 * max(residual, 1.0):
            return X, new_residual, it
        residual = new_residual
    return X, residual, max_iter


def solve_sylvester_spec(spec: SylvesterSpec, tol: float, kind: str = "k_step") -> Tuple[np.ndarray, SolveRecord]:
    """Matrix-free restarted GMRES on the vectorized tall Sylvester operator.

    A few residual-correction passes are run when the true residual misses
    ``tol``; if GMRES stagnates the fixed-point iteration is tried before
    giving up with SolverFailureError.
    """
    rhs = spec.rhs
    m, r = rhs.shape
    size = m * r
    if size == 0 or spec.shift == 0.0 or np.linalg.norm(rhs) == 0.0:
        X = rhs.copy()
        return X, SolveRecord(kind=kind, size=size, residual=0.0, tolerance=tol, method="trivial")

    dtype = np.result_type(rhs, *spec.right_ops, np.float64)

    def matvec(x: np.ndarray) -> np.ndarray:
        return spec.apply(x.reshape((m, r), order="F")).reshape(-1, order="F")

    operator = LinearOperator((size, size), matvec=matvec, dtype=dtype)
    preconditioner = None
    if solver_config.USE_JACOBI_PRECONDITIONER:
        diag = spec.jacobi_diagonal()
        if diag is None or np.any(diag == 0):
            logger.warning(f"{kind}: Jacobi preconditioner requested but no usable diagonal; running unpreconditioned")
        else:
            preconditioner = LinearOperator((size, size), matvec=lambda x: x / diag, dtype=dtype)

    b = rhs.reshape(-1, order="F").astype(dtype, copy=False)
    x = b.copy()
    iterations = 0
    residual = spec.residual(rhs)
    for _ in range(1 + solver_config.KRYLOV_REFINEMENTS):
        r_vec = b - operator.matvec(x)
        r_norm = np.linalg.norm(r_vec)
        if r_norm <= tol * np.linalg.norm(b):
            residual = float(r_norm / np.linalg.norm(b))
            break
        counter = {"n": 0}

        def _count(_):
            counter["n"] += 1

        # the correction solve targets the remaining relative gap
        inner_tol = min(0.5, tol * np.linalg.norm(b) / r_norm)
        dx, info = gmres(
            operator,
            r_vec,
            rtol=inner_tol,
            atol=0.0,
            restart=min(solver_config.KRYLOV_RESTART, size),
            maxiter=solver_config.KRYLOV_MAX_ITER,
            M=preconditioner,
            callback=_count,
            callback_type="pr_norm",
        )
        iterations += counter["n"]
        x = x + dx
        residual = spec.residual(x.reshape((m, r), order="F"))
        if info != 0:
            logger.debug(f"{kind}: GMRES returned info={info} with residual {residual:.2e}")
            break

    X = x.reshape((m, r), order="F")
    fallback = False
    if residual > tol:
        logger.warning(f"{kind}: GMRES stagnated at residual {residual:.2e} (target {tol:.2e}); trying fixed-point iteration")
        fallback = True
        X_fp, residual_fp, fp_iters = _fixed_point(spec, X, tol, solver_config.KRYLOV_MAX_ITER)
        iterations += fp_iters
        if residual_fp < residual:
            X, residual = X_fp, residual_fp
    if residual > tol:
        raise SolverFailureError(f"{kind} solve of size {m}x{r} did not converge", residual=residual)

    logger.debug(f"{kind} {m}x{r}: {iterations} iterations, relative residual {residual:.2e}")
    return X, SolveRecord(kind=kind, size=size, residual=residual, tolerance=tol,
                          iterations=iterations, method="gmres", fallback_used=fallback)


def _left_diagonals(ops) -> Optional[Tuple[np.ndarray, ...]]:
    if not solver_config.USE_JACOBI_PRECONDITIONER:
        return None
    return tuple(op.diagonal() for op in ops)


def tall_spec(
    ode: LinearMatrixODE, basis: np.ndarray, dt: float, rhs: np.ndarray, side: Side
) -> SylvesterSpec:
    """Assemble the K-step (basis = V) or L-step (basis = U) system.

    K-step: ``K - dt sum_j A_j K C_j = rhs`` with ``C_j = V^H B_j^T V``.
    L-step: the same on the transposed problem, ``L - dt sum_j conj(B_j) L D_j``
    with ``D_j = (U^H A_j U)^H``.
    """
    if side is Side.K:
        if basis.shape[0] != ode.shape[1] or rhs.shape[0] != ode.shape[0]:
            raise InvalidInputError(f"K-step basis {basis.shape} / rhs {rhs.shape} vs ODE {ode.shape}")
        basis_conj = np.conj(basis)
        right = tuple(project(B, basis_conj).T for B in ode.right_ops())
        left = tuple(A.matmat for A in ode.left_ops())
        diagonals = _left_diagonals(ode.left_ops())
    else:
        if basis.shape[0] != ode.shape[0] or rhs.shape[0] != ode.shape[1]:
            raise InvalidInputError(f"L-step basis {basis.shape} / rhs {rhs.shape} vs ODE {ode.shape}")
        right = tuple(project(A, basis).conj().T for A in ode.left_ops())
        left = tuple(B.conj_matmat for B in ode.right_ops())
        diagonals = _left_diagonals(ode.right_ops())
        if diagonals is not None:
            diagonals = tuple(np.conj(d) for d in diagonals)
    if rhs.shape[1] != basis.shape[1]:
        raise InvalidInputError(f"rhs has {rhs.shape[1]} columns, basis has {basis.shape[1]}")
    rhs = rhs.astype(np.result_type(rhs, basis, ode.dtype), copy=False)
    return SylvesterSpec(left_ops=left, right_ops=right, shift=dt, rhs=rhs, left_diagonals=diagonals)


def solve_tall_sylvester(
    ode: LinearMatrixODE,
    basis: np.ndarray,
    dt: float,
    rhs: np.ndarray,
    side: Side,
    eps_min: float = 0.0,
) -> Tuple[np.ndarray, SolveRecord]:
    """Solve the K- or L-step equation matrix-free.

    ``eps_min`` is the smallest truncation tolerance active in the step;
    the relative residual target is ``1e-2 * eps_min / ||rhs||`` floored at
    ``1e-12``.
    """
    if dt < 0:
        raise InvalidParameterError(f"step size must be >= 0, got {dt}")
    spec = tall_spec(ode, basis, dt, rhs, side)
    tol = tall_solve_tolerance(float(np.linalg.norm(rhs)), eps_min)
    return solve_sylvester_spec(spec, tol, kind=side.value)


def sylvester_dense_matrix(spec: SylvesterSpec) -> np.ndarray:
    """Explicit matrix of the vectorized operator (small problems and tests only)."""
    m, r = spec.rhs.shape
    size = m * r
    cols: List[np.ndarray] = []
    for idx in range(size):
        e = np.zeros(size, dtype=np.result_type(spec.rhs, np.float64))
        e[idx] = 1.0
        cols.append(spec.apply(e.reshape((m, r), order="F")).reshape(-1, order="F"))
    return np.column_stack(cols)

"""First-order rank-adaptive merge basis-update & Galerkin (mBUG) step."""

import logging
from typing import Optional, Tuple

import numpy as np

import solver_config
from models import MbugStepReport
from .errors import InvalidParameterError
from .lowrank import Factorization, TruncationMode, basis_defect, orthonormal_basis, truncate_dense
from .operators import LinearMatrixODE, eval_lowrank, project_terms, projected_source
from .sylvester import Side, solve_s_step, solve_tall_sylvester

logger = logging.getLogger(__name__)


def merged_bases(
    ode: LinearMatrixODE, *column_blocks: Tuple[np.ndarray, np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal ``(U_hat, V_hat)`` spanning the given (column, row) block pairs."""
    m1, m2 = ode.shape
    dtype = np.result_type(ode.dtype, *[b for pair in column_blocks for b in pair])
    U_hat = orthonormal_basis([u for u, _ in column_blocks], m1, dtype=dtype)
    V_hat = orthonormal_basis([v for _, v in column_blocks], m2, dtype=dtype)
    return U_hat, V_hat


def check_basis_contract(U_hat: np.ndarray, V_hat: np.ndarray, X: Factorization, what: str) -> float:
    """Largest relative defect of ``X``'s column/row spaces outside the merged bases."""
    if X.rank == 0:
        return 0.0
    transposed = Factorization(X.V, X.S, X.U)
    defect = max(basis_defect(U_hat, X), basis_defect(V_hat, transposed))
    if solver_config.CHECK_BASIS_CONTRACTS and defect > solver_config.BASIS_CONTRACT_TOL:
        logger.warning(f"{what}: merged basis misses part of the range (defect {defect:.2e})")
    return defect


def galerkin_update(
    ode: LinearMatrixODE,
    U_hat: np.ndarray,
    V_hat: np.ndarray,
    start: np.ndarray,
    t_new: float,
    dt: float,
    eps_s: float,
    mode: TruncationMode,
):
    """S-step on the merged bases followed by truncation and basis rotation.

    ``start`` is the projected right-hand side without the source; the
    projected ``dt * G(t_new)`` is added here.
    """
    rhs = start
    G_hat = projected_source(ode, t_new, U_hat, V_hat)
    if G_hat is not None:
        rhs = rhs + dt * G_hat
    Ahat, Bhat = project_terms(ode, U_hat, V_hat)
    S_hat, record = solve_s_step(Ahat, Bhat, dt, rhs)
    small = truncate_dense(S_hat, eps_s, mode)
    return Factorization(U_hat @ small.U, small.S, V_hat @ small.V), record


def mbug_step(
    ode: LinearMatrixODE,
    X: Factorization,
    t: float,
    dt: float,
    eps_f: float,
    eps_s: float,
    mode: TruncationMode,
    F: Optional[Factorization] = None,
    solve_eps: Optional[float] = None,
) -> Tuple[Factorization, MbugStepReport]:
    """Advance ``X`` from ``t`` to ``t + dt``.

    ``F`` may carry an already truncated ``F(X, t)``; otherwise it is
    evaluated here with tolerance ``eps_f``. ``solve_eps`` sets the accuracy
    of the K- and L-step solves and defaults to ``min(eps_f, eps_s)``; SDC
    passes the finest tolerance of its macro step.
    """
    if dt <= 0:
        raise InvalidParameterError(f"step size must be > 0, got {dt}")
    if eps_f < 0 or eps_s < 0:
        raise InvalidParameterError(f"tolerances must be >= 0, got eps_f={eps_f}, eps_s={eps_s}")
    if solve_eps is not None and solve_eps < 0:
        raise InvalidParameterError(f"solve tolerance must be >= 0, got {solve_eps}")
    mode = TruncationMode.parse(mode)
    t_new = t + dt
    m1, m2 = ode.shape

    if F is None:
        F = eval_lowrank(ode, X, t, eps_f, mode)

    solves = []
    kl_residuals = (0.0, 0.0)
    K_new = np.zeros((m1, 0), dtype=ode.dtype)
    L_new = np.zeros((m2, 0), dtype=ode.dtype)
    if X.rank > 0:
        if solve_eps is None:
            eps_min = min((e for e in (eps_f, eps_s) if e > 0), default=0.0)
        else:
            eps_min = solve_eps
        G = ode.source_at(t_new)

        K_rhs = X.U * X.S
        if G is not None and G.rank > 0:
            K_rhs = K_rhs + dt * ((G.U * G.S) @ (G.V.conj().T @ X.V))
        K_new, k_record = solve_tall_sylvester(ode, X.V, dt, K_rhs, Side.K, eps_min)

        L_rhs = X.V * X.S
        if G is not None and G.rank > 0:
            L_rhs = L_rhs + dt * ((G.V * G.S) @ (G.U.conj().T @ X.U))
        L_new, l_record = solve_tall_sylvester(ode, X.U, dt, L_rhs, Side.L, eps_min)

        solves.extend([k_record, l_record])
        kl_residuals = (k_record.residual, l_record.residual)

    U_hat, V_hat = merged_bases(ode, (X.U, X.V), (F.U, F.V), (K_new, L_new))
    if solver_config.CHECK_BASIS_CONTRACTS:
        check_basis_contract(U_hat, V_hat, X, "mBUG merge")

    if U_hat.shape[1] == 0 or V_hat.shape[1] == 0:
        logger.debug(f"mBUG step at t={t:.6g}: merged basis is empty")
        X_new = Factorization.zeros(m1, m2, dtype=np.result_type(ode.dtype, X.dtype))
        report = MbugStepReport(rank_before=X.rank, rank_merged=0, rank_after=0,
                                kl_residuals=kl_residuals, solves=solves)
        return X_new, report

    S_start = ((U_hat.conj().T @ X.U) * X.S) @ (X.V.conj().T @ V_hat)
    X_new, s_record = galerkin_update(ode, U_hat, V_hat, S_start, t_new, dt, eps_s, mode)
    solves.append(s_record)

    rank_merged = min(U_hat.shape[1], V_hat.shape[1])
    report = MbugStepReport(
        rank_before=X.rank,
        rank_merged=rank_merged,
        rank_after=X_new.rank,
        kl_residuals=kl_residuals,
        s_residual=s_record.residual,
        solves=solves,
    )
    logger.debug(
        f"mBUG step t={t:.6g} dt={dt:.3e}: rank {X.rank} -> merged {U_hat.shape[1]}x{V_hat.shape[1]} -> {X_new.rank}"
    )
    return X_new, report

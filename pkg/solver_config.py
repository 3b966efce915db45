"""Global numerical configuration for the low-rank SDC workspace."""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment overrides once at workspace level.
load_dotenv(Path(__file__).parent / ".env")


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value in (None, ""):
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


# Rank decisions in dense kernels
QR_RANK_RTOL = _env_float("LRSDC_QR_RANK_RTOL", 1e-14)
SVD_ZERO_RTOL = _env_float("LRSDC_SVD_ZERO_RTOL", 1e-14)

# Dense solves
DENSE_SOLVE_RTOL = _env_float("LRSDC_DENSE_SOLVE_RTOL", 1e-10)
DENSE_ORACLE_MAX_ENTRIES = _env_int("LRSDC_DENSE_ORACLE_MAX_ENTRIES", 10_000)

# S-step (Kronecker-vectorized direct solve)
S_STEP_RANK_CAP = _env_int("LRSDC_S_STEP_RANK_CAP", 256)

# K/L-step (matrix-free Krylov)
KRYLOV_MAX_ITER = _env_int("LRSDC_KRYLOV_MAX_ITER", 500)
KRYLOV_RESTART = _env_int("LRSDC_KRYLOV_RESTART", 60)
KRYLOV_TOL_FACTOR = _env_float("LRSDC_KRYLOV_TOL_FACTOR", 1e-2)
KRYLOV_TOL_FLOOR = _env_float("LRSDC_KRYLOV_TOL_FLOOR", 1e-12)
KRYLOV_REFINEMENTS = _env_int("LRSDC_KRYLOV_REFINEMENTS", 2)
USE_JACOBI_PRECONDITIONER = _env_bool("LRSDC_USE_JACOBI_PRECONDITIONER", False)

# Diagnostics
BASIS_CONTRACT_TOL = _env_float("LRSDC_BASIS_CONTRACT_TOL", 1e-10)
CHECK_BASIS_CONTRACTS = _env_bool("LRSDC_CHECK_BASIS_CONTRACTS", True)
LOG_UNPROJECTED_RESIDUAL = _env_bool("LRSDC_LOG_UNPROJECTED_RESIDUAL", False)

# Task-to-knob table for the three implicit solves; the harness reports
# residuals against these contracts.
SOLVE_CONTRACTS = {
    "k_step": {
        "method": "gmres",
        "tol_factor": KRYLOV_TOL_FACTOR,
        "tol_floor": KRYLOV_TOL_FLOOR,
        "max_iter": KRYLOV_MAX_ITER,
    },
    "l_step": {
        "method": "gmres",
        "tol_factor": KRYLOV_TOL_FACTOR,
        "tol_floor": KRYLOV_TOL_FLOOR,
        "max_iter": KRYLOV_MAX_ITER,
    },
    "s_step": {
        "method": "kronecker_direct",
        "rtol": DENSE_SOLVE_RTOL,
        "rank_cap": S_STEP_RANK_CAP,
    },
}

"""Pydantic models for structured data"""

import math
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

KNOWN_PROBLEMS = ("manufactured", "schrodinger", "anisotropic", "rotation")


class SolveRecord(BaseModel):
    """Outcome of one implicit solve (K-, L- or S-step)"""
    kind: Literal["k_step", "l_step", "s_step"]
    size: int  # number of unknowns
    residual: float = Field(..., ge=0.0)  # relative residual ||r|| / ||rhs||
    tolerance: float = Field(..., ge=0.0)  # relative residual contract
    iterations: int = 0
    method: str = "direct"
    fallback_used: bool = False

    @property
    def within_contract(self) -> bool:
        return self.residual <= self.tolerance


class MbugStepReport(BaseModel):
    """Diagnostics of one first-order mBUG step"""
    rank_before: int
    rank_merged: int  # columns of the merged column basis
    rank_after: int
    kl_residuals: Tuple[float, float] = (0.0, 0.0)
    s_residual: float = 0.0
    solves: List[SolveRecord] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_ranks(self) -> 'MbugStepReport':
        """A truncation never increases the rank of the merged Galerkin solution"""
        if self.rank_after > self.rank_merged:
            raise ValueError(
                f"rank_after={self.rank_after} exceeds rank_merged={self.rank_merged}"
            )
        if min(self.kl_residuals) < 0 or self.s_residual < 0:
            raise ValueError("residuals must be nonnegative")
        return self


class SdcLevelRecord(BaseModel):
    """Diagnostics of one correction sweep substep (level k, subinterval m)"""
    k: int
    m: int
    rank_merged: int
    rank: int
    rank_residual_sum: int  # rank of the rounded quadrature residual R
    s_residual: float = 0.0
    basis_defect_state: float = 0.0
    basis_defect_residual: float = 0.0
    unprojected_residual: Optional[float] = None
    solves: List[SolveRecord] = Field(default_factory=list)


class SdcStepDiagnostics(BaseModel):
    """All per-(k, m) records of one SDC-mBUG macro step"""
    t: float
    h: float
    stage1: List[MbugStepReport] = Field(default_factory=list)
    corrections: List[SdcLevelRecord] = Field(default_factory=list)

    def solves(self) -> List[SolveRecord]:
        out: List[SolveRecord] = []
        for report in self.stage1:
            out.extend(report.solves)
        for record in self.corrections:
            out.extend(record.solves)
        return out

    def max_basis_defect(self) -> float:
        defects = [max(r.basis_defect_state, r.basis_defect_residual) for r in self.corrections]
        return max(defects, default=0.0)


class SolveStatistics(BaseModel):
    """Aggregated residual statistics of one experiment cell"""
    count: int = 0
    violations: int = 0
    max_ratio: float = 0.0  # max residual / tolerance
    fallbacks: int = 0

    def add(self, record: SolveRecord) -> None:
        self.count += 1
        if record.fallback_used:
            self.fallbacks += 1
        if not record.within_contract:
            self.violations += 1
        if record.tolerance > 0:
            self.max_ratio = max(self.max_ratio, record.residual / record.tolerance)
        elif record.residual > 0:
            self.max_ratio = math.inf


class ExperimentConfig(BaseModel):
    """One benchmark x order x N_t x truncation-mode experiment matrix"""
    problem: str
    nx: int = Field(200, ge=8)
    ny: int = Field(200, ge=8)
    t_final: float = Field(..., gt=0.0)
    nt_list: List[int]
    orders: List[int]
    modes: List[Literal["hard", "soft"]]
    reference: Literal["exact", "rk4"] = "exact"
    ref_refine: int = Field(16, ge=1)
    out_dir: str = "./runs"
    rank_stride: int = Field(1, ge=1)
    c_override: Optional[float] = Field(None, gt=0.0)
    record_wall_time: bool = False
    svg: bool = True

    @field_validator('problem')
    @classmethod
    def validate_problem(cls, value: str) -> str:
        if value not in KNOWN_PROBLEMS:
            raise ValueError(f"unknown problem '{value}', expected one of {', '.join(KNOWN_PROBLEMS)}")
        return value

    @field_validator('nx', 'ny')
    @classmethod
    def validate_even(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"grid size must be even, got {value}")
        return value

    @field_validator('nt_list')
    @classmethod
    def validate_nt_list(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("nt_list must not be empty")
        if any(nt < 1 for nt in value):
            raise ValueError("step counts must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"nt_list must be strictly increasing, got {value}")
        return value

    @field_validator('orders')
    @classmethod
    def validate_orders(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("orders must not be empty")
        if any(order not in (1, 2, 3, 4) for order in value):
            raise ValueError(f"orders must be drawn from 1..4, got {value}")
        return value

    @field_validator('modes', mode='before')
    @classmethod
    def normalize_modes(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = [value]
        aliases = {"h": "hard", "s": "soft"}
        normalized = [aliases.get(str(v).strip().lower(), str(v).strip().lower()) for v in value]
        if not normalized:
            raise ValueError("modes must not be empty")
        return normalized

    @model_validator(mode='after')
    def validate_reference(self) -> 'ExperimentConfig':
        """Exact references are only available for the problems with a closed form"""
        if self.reference == "exact" and self.problem not in ("manufactured", "rotation"):
            raise ValueError(
                f"problem '{self.problem}' has no exact solution; use reference = rk4"
            )
        return self

    def grid_constant(self) -> float:
        """Truncation constant C = 2 (4 pi / N_x + 4 pi / N_y)^-1 unless overridden."""
        if self.c_override is not None:
            return self.c_override
        return 2.0 / (4.0 * math.pi / self.nx + 4.0 * math.pi / self.ny)


class ConvergenceRow(BaseModel):
    """One (scheme, N_t) cell of a convergence table"""
    scheme: str  # e.g. SDC-mBUG-3-H
    order: int
    mode: Literal["hard", "soft"]
    nt: int
    l2_error: Optional[float] = None
    rate: Optional[float] = None  # log(e_prev / e) / log(N_t / N_t_prev); None on the first row
    wall_seconds: Optional[float] = None
    final_rank: Optional[int] = None
    max_rank: Optional[int] = None
    error: Optional[str] = None  # solver failure message for this cell


class RunSummary(BaseModel):
    """Persisted summary of one experiment run"""
    problem: str
    config: Dict[str, Any]
    grid_constant: float
    rows: List[ConvergenceRow]
    solve_statistics: Dict[str, SolveStatistics] = Field(default_factory=dict)
    solve_contracts: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    reference_steps: Optional[int] = None
    finished_at: str = Field(default_factory=lambda: datetime.now().isoformat())

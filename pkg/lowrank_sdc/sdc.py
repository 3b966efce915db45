"""Spectral deferred correction on Gauss-Lobatto subnodes.

Holds the node/weight machinery, the dense full-rank SDC oracle and the
low-rank SDC-mBUG driver: an mBUG prediction sweep followed by K
correction sweeps that only solve small projected Galerkin systems.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy.interpolate import BarycentricInterpolator

import solver_config
from models import SdcLevelRecord, SdcStepDiagnostics
from .config import SUPPORTED_ORDERS
from .errors import InvalidInputError, InvalidParameterError, SolverFailureError
from .lowrank import FactoredTerm, Factorization, TruncationMode, rounded_sum
from .mbug import check_basis_contract, galerkin_update, mbug_step, merged_bases
from .operators import LinearMatrixODE, apply_dense, eval_lowrank, lowrank_terms
from .reference import implicit_euler_dense

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SdcGrid:
    """Gauss-Lobatto subnodes of one macro step and the weight table.

    ``weights[m, s]`` integrates the ``s``-th Lagrange basis polynomial
    over ``[nodes[m], nodes[m+1]]`` divided by ``sub_steps[m]``.
    """

    P: int
    nodes: np.ndarray
    sub_steps: np.ndarray
    weights: np.ndarray

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def t1(self) -> float:
        return float(self.nodes[-1])

    def full_interval_weights(self) -> np.ndarray:
        """Weights of the (P+1)-point Lobatto rule over the whole macro step."""
        return self.sub_steps @ self.weights


@lru_cache(maxsize=None)
def _reference_rule(P: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lobatto nodes on [-1, 1] and the normalized subinterval weights."""
    if P == 1:
        nodes = np.array([-1.0, 1.0])
    else:
        interior = np.sort(np.real(legendre.Legendre.basis(P).deriv().roots()))
        nodes = np.concatenate(([-1.0], interior, [1.0]))

    lagrange = BarycentricInterpolator(nodes, np.eye(P + 1))
    gauss_x, gauss_w = legendre.leggauss(P + 1)
    weights = np.empty((P, P + 1))
    for m in range(P):
        a, b = nodes[m], nodes[m + 1]
        points = 0.5 * (a + b) + 0.5 * (b - a) * gauss_x
        # integral over [a, b] divided by (b - a)
        weights[m] = 0.5 * gauss_w @ lagrange(points)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def lobatto_grid(P: int, t0: float, t1: float) -> SdcGrid:
    """P+1 Legendre Gauss-Lobatto nodes on ``[t0, t1]`` with their weights."""
    if int(P) != P or P < 1:
        raise InvalidParameterError(f"number of subintervals must be >= 1, got {P}")
    if not t1 > t0:
        raise InvalidParameterError(f"empty interval [{t0}, {t1}]")
    P = int(P)
    ref_nodes, ref_weights = _reference_rule(P)
    nodes = t0 + 0.5 * (ref_nodes + 1.0) * (t1 - t0)
    nodes[0], nodes[-1] = t0, t1
    return SdcGrid(P=P, nodes=nodes, sub_steps=np.diff(nodes), weights=np.array(ref_weights))


@dataclass(frozen=True)
class ToleranceSchedule:
    """Level-dependent truncation tolerances of SDC-mBUG.

    Stage 1 uses ``eps_f = C h`` and ``eps_s = C h^2``; correction level
    ``k`` uses ``eps_f^(k) = C h^(k+1)`` and ``eps_r^(k) = eps_s^(k+1) = C h^(k+2)``.
    """

    C: float
    h: float
    K: int

    def __post_init__(self):
        if self.C < 0 or not math.isfinite(self.C):
            raise InvalidParameterError(f"tolerance constant must be finite and >= 0, got {self.C}")
        if self.h <= 0:
            raise InvalidParameterError(f"macro step must be > 0, got {self.h}")
        if self.K < 0:
            raise InvalidParameterError(f"correction count must be >= 0, got {self.K}")

    @classmethod
    def from_grid(cls, nx: int, ny: int, h: float, K: int) -> "ToleranceSchedule":
        return cls(C=2.0 / (4.0 * math.pi / nx + 4.0 * math.pi / ny), h=h, K=K)

    @classmethod
    def exact(cls, h: float, K: int) -> "ToleranceSchedule":
        """All tolerances zero (no truncation beyond numerical zeros)."""
        return cls(C=0.0, h=h, K=K)

    @property
    def eps_f(self) -> float:
        return self.C * self.h

    @property
    def eps_s(self) -> float:
        return self.C * self.h**2

    def _check_level(self, k: int) -> None:
        if not 1 <= k <= self.K:
            raise InvalidParameterError(f"correction level {k} outside 1..{self.K}")

    def eps_f_level(self, k: int) -> float:
        self._check_level(k)
        return self.C * self.h ** (k + 1)

    def eps_r_level(self, k: int) -> float:
        self._check_level(k)
        return self.C * self.h ** (k + 2)

    def eps_s_level(self, k: int) -> float:
        """``eps_s^(k)``; level 1 is the Stage-1 value ``C h^2``."""
        if not 1 <= k <= self.K + 1:
            raise InvalidParameterError(f"S-step level {k} outside 1..{self.K + 1}")
        return self.C * self.h ** (k + 1)


@dataclass
class LevelState:
    """Per-node states and truncated right-hand sides of one sweep"""

    states: List[Factorization]
    rhs: List[Optional[Factorization]] = field(default_factory=list)

    def __post_init__(self):
        if not self.rhs:
            self.rhs = [None] * len(self.states)
        if len(self.rhs) != len(self.states):
            raise InvalidInputError(f"{len(self.states)} states vs {len(self.rhs)} right-hand sides")

    @property
    def P(self) -> int:
        return len(self.states) - 1


def _check_dense_oracle(ode: LinearMatrixODE) -> None:
    m1, m2 = ode.shape
    if m1 * m2 > solver_config.DENSE_ORACLE_MAX_ENTRIES:
        raise InvalidParameterError(
            f"dense oracle limited to {solver_config.DENSE_ORACLE_MAX_ENTRIES} entries, problem is {m1}x{m2}"
        )


def sdc_dense_step(ode: LinearMatrixODE, X: np.ndarray, grid: SdcGrid, K: int) -> np.ndarray:
    """Full-rank SDC with implicit Euler sweeps (small problems only)."""
    _check_dense_oracle(ode)
    if K < 0:
        raise InvalidParameterError(f"correction count must be >= 0, got {K}")
    X = np.asarray(X)
    nodes, dts, w = grid.nodes, grid.sub_steps, grid.weights

    states = [X]
    for m in range(grid.P):
        states.append(implicit_euler_dense(ode, states[m], nodes[m], dts[m]))

    for _ in range(K):
        F = [apply_dense(ode, states[s], nodes[s]) for s in range(grid.P + 1)]
        new_states = [states[0]]
        for m in range(grid.P):
            quadrature = sum(w[m, s] * F[s] for s in range(grid.P + 1))
            rhs = new_states[m] - dts[m] * F[m + 1] + dts[m] * quadrature
            new_states.append(implicit_euler_dense(ode, rhs, nodes[m], dts[m]))
        states = new_states
    return states[-1]


def _unprojected_residual(
    ode: LinearMatrixODE, X_new: Factorization, X_prev: Factorization, R: Factorization, t_new: float, dt: float
) -> float:
    """Relative residual of the unprojected correction equation."""
    terms = [FactoredTerm(X_new.U, X_new.S, X_new.V), FactoredTerm(-X_prev.U, X_prev.S, X_prev.V),
             FactoredTerm(-R.U, R.S, R.V)]
    if X_new.rank > 0:
        terms.extend(FactoredTerm(-dt * T.U, T.S, T.V) for T in lowrank_terms(ode, X_new, t_new))
    else:
        G = ode.source_at(t_new)
        if G is not None:
            terms.append(FactoredTerm(-dt * G.U, G.S, G.V))
    residual = rounded_sum(terms, 0.0, TruncationMode.HARD).norm()
    scale = max(X_prev.norm(), 1e-300)
    return residual / scale


def sdc_mbug_step(
    ode: LinearMatrixODE,
    X: Factorization,
    t: float,
    h: float,
    K: int,
    P: int,
    sched: ToleranceSchedule,
    mode: TruncationMode,
) -> Tuple[Factorization, SdcStepDiagnostics]:
    """One SDC-mBUG macro step from ``t`` to ``t + h``."""
    mode = TruncationMode.parse(mode)
    if K < 0:
        raise InvalidParameterError(f"correction count must be >= 0, got {K}")
    if sched.K < K:
        raise InvalidParameterError(f"tolerance schedule covers {sched.K} levels, {K} requested")
    grid = lobatto_grid(P, t, t + h)
    nodes, dts, w = grid.nodes, grid.sub_steps, grid.weights
    diagnostics = SdcStepDiagnostics(t=t, h=h)

    # Stage 1: mBUG prediction sweep; K/L solves resolved to the final level
    solve_eps = sched.C * h ** (K + 2)
    level = LevelState(states=[X])
    for m in range(P):
        F_m = eval_lowrank(ode, level.states[m], nodes[m], sched.eps_f, mode)
        level.rhs[m] = F_m
        try:
            X_next, report = mbug_step(ode, level.states[m], nodes[m], dts[m], sched.eps_f, sched.eps_s, mode,
                                       F=F_m, solve_eps=solve_eps)
        except SolverFailureError as exc:
            raise exc.at(0, m) from exc
        level.states.append(X_next)
        level.rhs.append(None)
        diagnostics.stage1.append(report)

    # Stage 2: corrections, Galerkin S-steps only
    for k in range(1, K + 1):
        eps_f = sched.eps_f_level(k)
        eps_r = sched.eps_r_level(k)
        eps_s = sched.eps_s_level(k + 1)
        F = [eval_lowrank(ode, level.states[s], nodes[s], eps_f, mode) for s in range(P + 1)]
        level.rhs = F

        new_level = LevelState(states=[level.states[0]])
        for m in range(P):
            dt = float(dts[m])
            X_prev = new_level.states[m]
            terms = [F[m + 1].scaled(-dt)]
            terms.extend(F[s].scaled(dt * w[m, s]) for s in range(P + 1))
            R = rounded_sum(terms, eps_r, mode)

            U_hat, V_hat = merged_bases(ode, (X_prev.U, X_prev.V), (F[m + 1].U, F[m + 1].V), (R.U, R.V))
            defect_state = check_basis_contract(U_hat, V_hat, X_prev, f"correction (k={k}, m={m}) state")
            defect_residual = check_basis_contract(U_hat, V_hat, R, f"correction (k={k}, m={m}) residual")

            if U_hat.shape[1] == 0 or V_hat.shape[1] == 0:
                X_new = Factorization.zeros(*ode.shape, dtype=np.result_type(ode.dtype, X.dtype))
                solves = []
                s_residual = 0.0
            else:
                start = ((U_hat.conj().T @ X_prev.U) * X_prev.S) @ (X_prev.V.conj().T @ V_hat)
                if R.rank > 0:
                    start = start + ((U_hat.conj().T @ R.U) * R.S) @ (R.V.conj().T @ V_hat)
                try:
                    X_new, s_record = galerkin_update(ode, U_hat, V_hat, start, float(nodes[m + 1]), dt, eps_s, mode)
                except SolverFailureError as exc:
                    raise exc.at(k, m) from exc
                solves = [s_record]
                s_residual = s_record.residual

            unprojected = None
            if solver_config.LOG_UNPROJECTED_RESIDUAL:
                unprojected = _unprojected_residual(ode, X_new, X_prev, R, float(nodes[m + 1]), dt)
                logger.debug(f"correction (k={k}, m={m}): unprojected residual {unprojected:.2e}")

            new_level.states.append(X_new)
            new_level.rhs.append(None)
            diagnostics.corrections.append(
                SdcLevelRecord(
                    k=k,
                    m=m,
                    rank_merged=min(U_hat.shape[1], V_hat.shape[1]),
                    rank=X_new.rank,
                    rank_residual_sum=R.rank,
                    s_residual=s_residual,
                    basis_defect_state=defect_state,
                    basis_defect_residual=defect_residual,
                    unprojected_residual=unprojected,
                    solves=solves,
                )
            )
        level = new_level

    return level.states[-1], diagnostics


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    rank: int
    state: Optional[Factorization] = None


@dataclass
class Trajectory:
    """Ranks after every macro step plus the states kept for sampling"""

    order: int
    mode: TruncationMode
    schedule: ToleranceSchedule
    points: List[TrajectoryPoint] = field(default_factory=list)
    diagnostics: List[SdcStepDiagnostics] = field(default_factory=list)

    @property
    def final(self) -> Factorization:
        return self.points[-1].state

    def ranks(self) -> List[Tuple[float, int]]:
        return [(p.t, p.rank) for p in self.points]

    def solves(self):
        for diag in self.diagnostics:
            yield from diag.solves()


def order_parameters(order: int) -> Tuple[int, int]:
    """``(K, P)`` for a nominal order: K = P = order - 1, order 1 is plain mBUG."""
    if order not in SUPPORTED_ORDERS:
        raise InvalidParameterError(f"order must be one of {SUPPORTED_ORDERS}, got {order}")
    if order == 1:
        return 0, 1
    return order - 1, order - 1


def integrate(
    ode: LinearMatrixODE,
    X0: Factorization,
    t0: float,
    T: float,
    steps: int,
    order: int,
    mode: TruncationMode,
    C: float,
    state_stride: int = 0,
    keep_diagnostics: bool = True,
) -> Trajectory:
    """Run ``steps`` SDC-mBUG macro steps of size ``(T - t0) / steps``.

    The rank is recorded after every step. States are kept at the initial
    time, at every ``state_stride``-th step (0 keeps none) and at ``T``.
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    if not T > t0:
        raise InvalidParameterError(f"final time {T} must exceed start time {t0}")
    mode = TruncationMode.parse(mode)
    K, P = order_parameters(order)
    h = (T - t0) / steps
    sched = ToleranceSchedule(C=C, h=h, K=K)
    trajectory = Trajectory(order=order, mode=mode, schedule=sched)
    trajectory.points.append(TrajectoryPoint(t=t0, rank=X0.rank, state=X0))

    X = X0
    for n in range(steps):
        t_n = t0 + n * h
        X, diagnostics = sdc_mbug_step(ode, X, t_n, h, K, P, sched, mode)
        if keep_diagnostics:
            trajectory.diagnostics.append(diagnostics)
        t_next = T if n == steps - 1 else t0 + (n + 1) * h
        keep = n == steps - 1 or (state_stride > 0 and (n + 1) % state_stride == 0)
        trajectory.points.append(TrajectoryPoint(t=t_next, rank=X.rank, state=X if keep else None))
        if (n + 1) % max(steps // 10, 1) == 0:
            logger.debug(f"{ode.name} order {order}-{mode.label}: step {n + 1}/{steps}, rank {X.rank}")
    return trajectory

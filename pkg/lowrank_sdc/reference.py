"""Full-rank reference integrators, reference rank curves and the reference cache."""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

import solver_config
from .dense import ScalarField, solve_kron_sum
from .errors import InvalidInputError, InvalidParameterError, SingularSystemError, SolverFailureError
from .lowrank import TruncationMode, truncate_dense
from .operators import LinearMatrixODE, apply_dense

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"LRSDCREF"
CACHE_VERSION = 1
# magic, version u32, field tag u8, m1 u64, m2 u64, sample count u64
_HEADER = struct.Struct("<8sIBQQQ")


@dataclass
class ReferenceSolution:
    """Dense states of a full-rank run at a set of sample instants"""

    times: np.ndarray
    states: np.ndarray  # (count, m1, m2)
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states)
        if self.states.ndim != 3 or self.states.shape[0] != self.times.shape[0]:
            raise InvalidInputError(
                f"{self.times.shape[0]} sample times vs states of shape {self.states.shape}"
            )
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("reference sample times must be strictly increasing")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.states.shape[1], self.states.shape[2]

    @property
    def field(self) -> ScalarField:
        return ScalarField.of(self.states)

    def at(self, t: float, atol: float = 1e-9) -> np.ndarray:
        """State sampled at ``t`` (must be one of the sample instants)."""
        if self.times.size == 0:
            raise InvalidParameterError("reference has no samples")
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > atol * max(1.0, abs(t)):
            raise InvalidParameterError(f"no reference sample at t={t}")
        return self.states[idx]


def _dense_oracle_guard(ode: LinearMatrixODE) -> None:
    m1, m2 = ode.shape
    if m1 * m2 > solver_config.DENSE_ORACLE_MAX_ENTRIES:
        raise InvalidParameterError(
            f"dense implicit Euler limited to {solver_config.DENSE_ORACLE_MAX_ENTRIES} entries, "
            f"problem is {m1}x{m2}"
        )


def implicit_euler_dense(ode: LinearMatrixODE, X: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One implicit Euler step ``X' = X + dt F(X', t + dt)`` solved through the Kronecker form."""
    _dense_oracle_guard(ode)
    X = np.asarray(X)
    if X.shape != ode.shape:
        raise InvalidInputError(f"state of shape {X.shape}, ODE expects {ode.shape}")
    if dt < 0:
        raise InvalidParameterError(f"step size must be >= 0, got {dt}")
    if dt == 0:
        return X.copy()
    rhs = X.astype(np.result_type(X, ode.dtype), copy=True)
    G = ode.source_at(t + dt)
    if G is not None:
        rhs = rhs + dt * G.to_dense()
    left = [A.dense() for A in ode.left_ops()]
    right = [B.dense() for B in ode.right_ops()]
    try:
        return solve_kron_sum(left, right, dt, rhs)
    except SingularSystemError as exc:
        raise SolverFailureError(f"implicit Euler system at t={t + dt:.6g} is singular: {exc}") from exc


def rk4_step(ode: LinearMatrixODE, X: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = apply_dense(ode, X, t)
    k2 = apply_dense(ode, X + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = apply_dense(ode, X + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = apply_dense(ode, X + dt * k3, t + dt)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _sample_indices(t0: float, T: float, steps: int, sample_at: Sequence[float]) -> List[int]:
    h = (T - t0) / steps
    indices = []
    for t in sample_at:
        idx = int(round((t - t0) / h))
        if idx < 0 or idx > steps or abs(t0 + idx * h - t) > 1e-9 * max(1.0, abs(T)):
            raise InvalidParameterError(f"sample time {t} is not on the step grid of {steps} steps over [{t0}, {T}]")
        indices.append(idx)
    return indices


def rk4_dense(
    ode: LinearMatrixODE,
    X0: np.ndarray,
    t0: float,
    T: float,
    steps: int,
    sample_at: Sequence[float],
) -> ReferenceSolution:
    """Classical RK4 on the dense matrix ODE, sampled at grid instants."""
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    if not T > t0:
        raise InvalidParameterError(f"final time {T} must exceed start time {t0}")
    X = np.asarray(X0).astype(np.result_type(X0, ode.dtype), copy=True)
    if X.shape != ode.shape:
        raise InvalidInputError(f"state of shape {X.shape}, ODE expects {ode.shape}")
    indices = _sample_indices(t0, T, steps, sample_at)
    wanted = {idx: i for i, idx in enumerate(indices)}
    if len(wanted) != len(indices):
        raise InvalidParameterError("duplicate reference sample times")

    h = (T - t0) / steps
    samples = np.empty((len(indices),) + X.shape, dtype=X.dtype)
    if 0 in wanted:
        samples[wanted[0]] = X
    for n in range(steps):
        X = rk4_step(ode, X, t0 + n * h, h)
        if n + 1 in wanted:
            samples[wanted[n + 1]] = X
    logger.info(f"RK4 reference for {ode.name}: {steps} steps, {len(indices)} samples")

    order = np.argsort(indices)
    times = np.array([t0 + indices[i] * h for i in order])
    return ReferenceSolution(
        times=times,
        states=samples[order],
        meta={"ode": ode.name, "steps": steps, "t0": t0, "T": T, "shape": list(ode.shape)},
    )


def reference_rank_curve(ref: ReferenceSolution, eps: float, mode: TruncationMode) -> List[Tuple[float, int]]:
    """Rank of every reference sample after truncation at ``eps``."""
    mode = TruncationMode.parse(mode)
    return [(float(t), truncate_dense(state, eps, mode).rank) for t, state in zip(ref.times, ref.states)]


def save_reference(ref: ReferenceSolution, path: Union[str, Path]) -> Path:
    """Write ``ref`` in the little-endian reference cache format."""
    path = Path(path)
    m1, m2 = ref.shape
    field_ = ref.field
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, field_.tag, m1, m2, ref.times.shape[0])
    states = np.ascontiguousarray(ref.states, dtype=field_.dtype.newbyteorder("<"))
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(ref.times.astype("<f8").tobytes())
            # complex states as interleaved (re, im) pairs
            f.write(states.view("<f8").tobytes())
    except OSError as exc:
        raise OSError(f"Could not write reference cache {path}: {exc}") from exc
    logger.debug(f"Saved reference ({ref.times.shape[0]} samples, {m1}x{m2}) to {path}")
    return path


def load_reference(path: Union[str, Path]) -> ReferenceSolution:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated reference header")
    magic, version, tag, m1, m2, count = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise InvalidInputError(f"{path}: not a reference cache file")
    if version != CACHE_VERSION:
        raise InvalidInputError(f"{path}: unsupported reference cache version {version}")
    field_ = ScalarField.from_tag(tag)
    per_entry = 2 if field_ is ScalarField.COMPLEX else 1
    n_floats = count + count * m1 * m2 * per_entry
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != n_floats:
        raise InvalidInputError(f"{path}: expected {n_floats} values, found {body.size}")
    times = body[:count].copy()
    states = body[count:].copy()
    if field_ is ScalarField.COMPLEX:
        states = states.view("<c16")
    states = states.reshape((count, m1, m2)).astype(field_.dtype)
    return ReferenceSolution(times=times, states=states, meta={"source": str(path)})

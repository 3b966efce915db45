"""Fourier-collocation benchmark problems on the periodic square [-2pi, 2pi]^2.

The row index of a state matrix is the x index and the column index the
y index, so ``c(x) * d/dy`` becomes the pair ``(diag(c), D1)``.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.linalg import toeplitz

from .config import (
    ANISOTROPIC_DIFFUSION,
    DOMAIN_LEFT,
    DOMAIN_LENGTH,
    MANUFACTURED_DIFFUSION,
    MIN_GRID_POINTS,
    PROBLEM_IDS,
)
from .dense import ScalarField
from .errors import InvalidParameterError
from .lowrank import FactoredTerm, Factorization, TruncationMode, rounded_sum, truncate_dense
from .operators import CoefficientOperator, LinearMatrixODE, build_ode

logger = logging.getLogger(__name__)

ExactSolution = Callable[[float], Union[Factorization, np.ndarray]]


@dataclass(frozen=True)
class PeriodicGrid:
    """``N`` equispaced points on [-2pi, 2pi), right endpoint excluded"""

    N: int

    def __post_init__(self):
        if self.N < MIN_GRID_POINTS or self.N % 2:
            raise InvalidParameterError(f"grid size must be even and >= {MIN_GRID_POINTS}, got {self.N}")

    @property
    def spacing(self) -> float:
        return DOMAIN_LENGTH / self.N

    @property
    def points(self) -> np.ndarray:
        return DOMAIN_LEFT + self.spacing * np.arange(self.N)


@lru_cache(maxsize=8)
def _diff_matrices(N: int) -> Tuple[np.ndarray, np.ndarray]:
    if N % 2:
        raise InvalidParameterError(f"Fourier differentiation needs an even N, got {N}")
    h = 2.0 * math.pi / N
    k = np.arange(1, N)
    # 2pi-periodic first and second derivative columns
    col1 = np.concatenate(([0.0], 0.5 * (-1.0) ** k / np.tan(0.5 * k * h)))
    D1 = toeplitz(col1, col1[np.r_[0, N - 1:0:-1]])
    col2 = np.concatenate(([-math.pi**2 / (3.0 * h**2) - 1.0 / 6.0], -0.5 * (-1.0) ** k / np.sin(0.5 * k * h) ** 2))
    D2 = toeplitz(col2)
    # rescale from period 2pi to the domain length
    scale = 2.0 * math.pi / DOMAIN_LENGTH
    D1, D2 = scale * D1, scale**2 * D2
    D1.setflags(write=False)
    D2.setflags(write=False)
    return D1, D2


def fourier_diff_matrices(grid: PeriodicGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Spectral first/second derivative matrices for the grid's period."""
    D1, D2 = _diff_matrices(grid.N)
    return D1.copy(), D2.copy()


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    ode: LinearMatrixODE
    X0: Factorization
    grid_x: PeriodicGrid
    grid_y: PeriodicGrid
    exact: Optional[ExactSolution] = None

    @property
    def field(self) -> ScalarField:
        return self.ode.field

    @property
    def cell_area(self) -> float:
        return self.grid_x.spacing * self.grid_y.spacing

    def has_exact(self) -> bool:
        return self.exact is not None

    def exact_dense(self, t: float) -> np.ndarray:
        if self.exact is None:
            raise InvalidParameterError(f"problem '{self.name}' has no exact solution")
        value = self.exact(t)
        return value.to_dense() if isinstance(value, Factorization) else value

    def l2_error(self, approx: Union[Factorization, np.ndarray], reference: np.ndarray) -> float:
        """Grid L2 distance ``sqrt(dx dy) * ||approx - reference||_F``."""
        dense = approx.to_dense() if isinstance(approx, Factorization) else np.asarray(approx)
        return float(math.sqrt(self.cell_area) * np.linalg.norm(dense - reference))


def _rank_one(u: np.ndarray, v: np.ndarray, dtype=np.float64) -> Factorization:
    """Factorization of the outer product ``u v^T`` for real-valued profiles."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    U = (u / nu).astype(dtype)[:, None]
    V = (v / nv).astype(dtype)[:, None]
    return Factorization(U, np.array([nu * nv]), V)


def _grids(grid: PeriodicGrid, grid_y: Optional[PeriodicGrid]) -> Tuple[PeriodicGrid, PeriodicGrid]:
    return grid, grid if grid_y is None else grid_y


def _rotation_terms(gx: PeriodicGrid, gy: PeriodicGrid, dtype=np.float64):
    """``y u_x - x u_y`` as operator pairs."""
    D1x, _ = fourier_diff_matrices(gx)
    D1y, _ = fourier_diff_matrices(gy)
    x, y = gx.points, gy.points
    return [
        (CoefficientOperator.from_dense(D1x.astype(dtype), "Dx"), CoefficientOperator.diagonal_of(y.astype(dtype), "y")),
        (CoefficientOperator.diagonal_of(-x.astype(dtype), "-x"), CoefficientOperator.from_dense(D1y.astype(dtype), "Dy")),
    ]


def manufactured_problem(grid: PeriodicGrid, grid_y: Optional[PeriodicGrid] = None) -> BenchmarkProblem:
    """Rotation with isotropic diffusion and a manufactured source.

    Exact solution ``exp(-x^2 - 3y^2) exp(-2dt)``, rank 1 at all times.
    """
    gx, gy = _grids(grid, grid_y)
    d = MANUFACTURED_DIFFUSION
    x, y = gx.points, gy.points
    _, D2x = fourier_diff_matrices(gx)
    _, D2y = fourier_diff_matrices(gy)
    terms = _rotation_terms(gx, gy) + [
        (CoefficientOperator.from_dense(d * D2x, "d*Dxx"), CoefficientOperator.identity(gy.N)),
        (CoefficientOperator.identity(gx.N), CoefficientOperator.from_dense(d * D2y, "d*Dyy")),
    ]

    gauss_x, gauss_y = np.exp(-x**2), np.exp(-3.0 * y**2)
    one = np.ones(1)
    # phi(x, y, 0) = (6d - 4xy - 4d x^2 - 36d y^2) exp(-x^2 - 3y^2)
    pieces = [
        FactoredTerm((6.0 * d * gauss_x)[:, None], one, gauss_y[:, None]),
        FactoredTerm((-4.0 * x * gauss_x)[:, None], one, (y * gauss_y)[:, None]),
        FactoredTerm((-4.0 * d * x**2 * gauss_x)[:, None], one, gauss_y[:, None]),
        FactoredTerm((-36.0 * d * gauss_x)[:, None], one, (y**2 * gauss_y)[:, None]),
    ]
    G0 = rounded_sum(pieces, 0.0, TruncationMode.HARD)
    X0 = _rank_one(gauss_x, gauss_y)

    def source(t: float) -> Factorization:
        return G0.scaled(math.exp(-2.0 * d * t))

    def exact(t: float) -> Factorization:
        return X0.scaled(math.exp(-2.0 * d * t))

    ode = build_ode(terms, source=source, field=ScalarField.REAL, name="manufactured")
    return BenchmarkProblem("manufactured", ode, X0, gx, gy, exact=exact)


def manufactured_source_dense(grid: PeriodicGrid, t: float, grid_y: Optional[PeriodicGrid] = None) -> np.ndarray:
    """Pointwise evaluation of the manufactured source on the grid."""
    gx, gy = _grids(grid, grid_y)
    d = MANUFACTURED_DIFFUSION
    x, y = np.meshgrid(gx.points, gy.points, indexing="ij")
    prefactor = 6.0 * d - 4.0 * x * y - 4.0 * d * x**2 - 36.0 * d * y**2
    return prefactor * np.exp(-x**2 - 3.0 * y**2) * math.exp(-2.0 * d * t)


def schrodinger_problem(grid: PeriodicGrid, grid_y: Optional[PeriodicGrid] = None) -> BenchmarkProblem:
    """``u_t = (i/2) lap u - i V u`` with ``V = x^2 - xy + 1.5 y^2``."""
    gx, gy = _grids(grid, grid_y)
    x, y = gx.points, gy.points
    _, D2x = fourier_diff_matrices(gx)
    _, D2y = fourier_diff_matrices(gy)
    c = np.complex128
    terms = [
        (CoefficientOperator.from_dense(0.5j * D2x, "(i/2)Dxx"), CoefficientOperator.identity(gy.N)),
        (CoefficientOperator.identity(gx.N), CoefficientOperator.from_dense(0.5j * D2y, "(i/2)Dyy")),
        (CoefficientOperator.diagonal_of(-1j * x**2, "-i x^2"), CoefficientOperator.identity(gy.N)),
        (CoefficientOperator.diagonal_of(1j * x, "i x"), CoefficientOperator.diagonal_of(y.astype(c), "y")),
        (CoefficientOperator.identity(gx.N), CoefficientOperator.diagonal_of(-1.5j * y**2, "-1.5i y^2")),
    ]
    X0 = _rank_one(np.exp(-0.5 * x**2) / math.sqrt(math.pi), np.exp(-0.5 * (y - 1.0) ** 2), dtype=c)
    ode = build_ode(terms, source=None, field=ScalarField.COMPLEX, name="schrodinger")
    return BenchmarkProblem("schrodinger", ode, X0, gx, gy, exact=None)


def anisotropic_coefficients(x: np.ndarray, y: np.ndarray) -> Dict[str, np.ndarray]:
    """Diffusion coefficients ``a_i(x)`` and ``b_i(y)``."""
    return {
        "a1": 1.0 + 0.1 * np.sin(0.5 * x),
        "a2": 0.15 + 0.1 * np.sin(0.5 * x),
        "a3": 0.15 + 0.1 * np.cos(0.5 * x),
        "a4": 1.0 + 0.1 * np.sin(0.5 * x),
        "b1": 1.0 + 0.1 * np.cos(0.5 * y),
        "b2": 0.15 + 0.1 * np.cos(0.5 * y),
        "b3": 0.15 + 0.1 * np.sin(0.5 * y),
        "b4": 1.0 + 0.1 * np.cos(0.5 * y),
    }


def anisotropic_problem(grid: PeriodicGrid, grid_y: Optional[PeriodicGrid] = None) -> BenchmarkProblem:
    """Solid body rotation with variable-coefficient anisotropic diffusion."""
    gx, gy = _grids(grid, grid_y)
    d = ANISOTROPIC_DIFFUSION
    x, y = gx.points, gy.points
    D1x, _ = fourier_diff_matrices(gx)
    D1y, _ = fourier_diff_matrices(gy)
    co = anisotropic_coefficients(x, y)
    dense = CoefficientOperator.from_dense
    terms = _rotation_terms(gx, gy) + [
        # b1(y) d_x(a1(x) d_x u)
        (dense(d * D1x @ np.diag(co["a1"]) @ D1x, "d*Dx a1 Dx"), CoefficientOperator.diagonal_of(co["b1"], "b1")),
        # b2(y) d_xy(a2(x) u)
        (dense(d * D1x @ np.diag(co["a2"]), "d*Dx a2"), dense(np.diag(co["b2"]) @ D1y, "b2 Dy")),
        # a3(x) d_xy(b3(y) u)
        (dense(d * np.diag(co["a3"]) @ D1x, "d*a3 Dx"), dense(D1y @ np.diag(co["b3"]), "Dy b3")),
        # a4(x) d_y(b4(y) u)
        (CoefficientOperator.diagonal_of(d * co["a4"], "d*a4"), dense(D1y @ np.diag(co["b4"]), "Dy b4")),
    ]
    X0 = _rank_one(np.exp(-x**2), np.exp(-9.0 * y**2))
    ode = build_ode(terms, source=None, field=ScalarField.REAL, name="anisotropic")
    return BenchmarkProblem("anisotropic", ode, X0, gx, gy, exact=None)


def rotation_initial(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.exp(-(5.0 * x**2 + 5.0 * y**2 + 8.0 * x * y))


def rotation_problem(grid: PeriodicGrid, grid_y: Optional[PeriodicGrid] = None) -> BenchmarkProblem:
    """Pure rigid body rotation; the exact solution rotates the initial data."""
    gx, gy = _grids(grid, grid_y)
    X, Y = np.meshgrid(gx.points, gy.points, indexing="ij")
    # the initial Gaussian is not separable; keep its numerical rank
    X0 = truncate_dense(rotation_initial(X, Y), 0.0, TruncationMode.HARD)

    def exact(t: float) -> np.ndarray:
        c, s = math.cos(t), math.sin(t)
        return rotation_initial(c * X + s * Y, -s * X + c * Y)

    ode = build_ode(_rotation_terms(gx, gy), source=None, field=ScalarField.REAL, name="rotation")
    return BenchmarkProblem("rotation", ode, X0, gx, gy, exact=exact)


PROBLEM_BUILDERS: Dict[str, Callable[..., BenchmarkProblem]] = {
    "manufactured": manufactured_problem,
    "schrodinger": schrodinger_problem,
    "anisotropic": anisotropic_problem,
    "rotation": rotation_problem,
}


def build_problem(name: str, nx: int, ny: Optional[int] = None) -> BenchmarkProblem:
    """Construct a benchmark by id on an ``nx`` x ``ny`` grid."""
    if name not in PROBLEM_BUILDERS:
        raise InvalidParameterError(f"unknown problem '{name}', expected one of {', '.join(PROBLEM_IDS)}")
    grid_x = PeriodicGrid(nx)
    grid_y = PeriodicGrid(nx if ny is None else ny)
    problem = PROBLEM_BUILDERS[name](grid_x, grid_y)
    logger.debug(f"Built problem {name} on {grid_x.N}x{grid_y.N}, X0 rank {problem.X0.rank}")
    return problem

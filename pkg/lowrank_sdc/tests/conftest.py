"""Pytest configuration and shared fixtures"""

import numpy as np
import pytest

from lowrank_sdc.dense import ScalarField
from lowrank_sdc.lowrank import Factorization
from lowrank_sdc.operators import CoefficientOperator, build_ode


def random_factorization(rng, m1, m2, r, complex_=False, scale=1.0):
    """Random valid factorization of rank ``r`` with decaying singular values."""
    def orthonormal(m):
        M = rng.standard_normal((m, r))
        if complex_:
            M = M + 1j * rng.standard_normal((m, r))
        Q, _ = np.linalg.qr(M)
        return Q

    S = np.sort(scale * rng.uniform(0.1, 1.0, r) * 0.7 ** np.arange(r))[::-1]
    return Factorization(orthonormal(m1), S.copy(), orthonormal(m2))


def stable_ode(rng, m1, m2, n_terms=3, complex_=False, with_source=False, name="random"):
    """Random dissipative operator pairs plus an optional rank-2 time-dependent source."""
    def small(m):
        M = rng.standard_normal((m, m)) / np.sqrt(m)
        if complex_:
            M = M + 1j * rng.standard_normal((m, m)) / np.sqrt(m)
        return 0.3 * M

    pairs = [
        (CoefficientOperator.from_dense(-np.eye(m1) + small(m1), "A0"), CoefficientOperator.identity(m2)),
    ]
    for j in range(1, n_terms):
        pairs.append((CoefficientOperator.from_dense(small(m1), f"A{j}"),
                      CoefficientOperator.from_dense(small(m2), f"B{j}")))

    source = None
    if with_source:
        G0 = random_factorization(rng, m1, m2, 2, complex_=complex_)

        def source(t):
            return G0.scaled(1.0 + 0.5 * np.sin(t))

    field = ScalarField.COMPLEX if complex_ else ScalarField.REAL
    return build_ode(pairs, source=source, field=field, name=name)


@pytest.fixture
def rng():
    """Seeded random generator"""
    return np.random.default_rng(20240517)


@pytest.fixture
def small_real_ode(rng):
    """8x7 real ODE with a source term"""
    return stable_ode(rng, 8, 7, n_terms=3, with_source=True)


@pytest.fixture
def small_complex_ode(rng):
    """6x5 complex ODE with a source term"""
    return stable_ode(rng, 6, 5, n_terms=3, complex_=True, with_source=True)


@pytest.fixture
def scalar_decay_ode():
    """x' = -x as a 1x1 matrix ODE"""
    return build_ode([(CoefficientOperator.from_dense([[-1.0]]), CoefficientOperator.from_dense([[1.0]]))],
                     name="decay")

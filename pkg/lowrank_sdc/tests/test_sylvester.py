"""Tests for the K-, L- and S-step solvers"""

import numpy as np
import pytest

import solver_config
from lowrank_sdc.errors import CapacityError, InvalidInputError, InvalidParameterError, SolverFailureError
from lowrank_sdc.sylvester import (
    Side,
    SylvesterSpec,
    solve_s_step,
    solve_sylvester_spec,
    solve_tall_sylvester,
    sylvester_dense_matrix,
    tall_solve_tolerance,
    tall_spec,
)
from .conftest import random_factorization


class TestSStep:
    """Tests for the small square Galerkin solve"""

    def test_solution_satisfies_equation(self, rng):
        """Test that S - dt sum Ahat S Bhat^T = rhs"""
        Ahat = [rng.standard_normal((4, 4)) for _ in range(3)]
        Bhat = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(3)]
        rhs = rng.standard_normal((4, 3))
        S, record = solve_s_step(Ahat, Bhat, 0.05, rhs)
        lhs = S - 0.05 * sum(a @ S @ b.T for a, b in zip(Ahat, Bhat))
        assert np.allclose(lhs, rhs, atol=1e-12)
        assert record.kind == "s_step"
        assert record.within_contract

    def test_zero_step(self, rng):
        """Test that dt = 0 returns the right-hand side"""
        rhs = rng.standard_normal((2, 2))
        S, record = solve_s_step([np.eye(2)], [np.eye(2)], 0.0, rhs)
        assert np.array_equal(S, rhs)
        assert record.residual == 0.0

    def test_capacity(self, rng):
        """Test that a system above the rank cap raises CapacityError"""
        with pytest.raises(CapacityError):
            solve_s_step([np.eye(5)], [np.eye(5)], 0.1, np.ones((5, 5)), rank_cap=4)

    def test_negative_step(self):
        """Test that a negative step is rejected"""
        with pytest.raises(InvalidParameterError):
            solve_s_step([np.eye(2)], [np.eye(2)], -0.1, np.ones((2, 2)))


class TestTallTolerance:
    """Tests for the GMRES residual target"""

    def test_tied_to_tolerance(self):
        """Test that the target is 1e-2 eps / ||rhs||"""
        assert tall_solve_tolerance(2.0, 1e-4) == pytest.approx(solver_config.KRYLOV_TOL_FACTOR * 1e-4 / 2.0)

    def test_floor(self):
        """Test that the target never drops below the floor"""
        assert tall_solve_tolerance(1.0, 0.0) == solver_config.KRYLOV_TOL_FLOOR
        assert tall_solve_tolerance(1e6, 1e-12) == solver_config.KRYLOV_TOL_FLOOR


class TestTallSylvester:
    """Tests for the matrix-free K- and L-step solves"""

    def test_k_step_equation(self, small_complex_ode, rng):
        """Test that K - dt sum A_j K (V^H B_j^T V) = rhs"""
        ode = small_complex_ode
        V = random_factorization(rng, 5, 5, 2, complex_=True).V
        rhs = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
        K, record = solve_tall_sylvester(ode, V, 0.1, rhs, Side.K)
        lhs = K - 0.1 * sum(A.dense() @ K @ (V.conj().T @ B.dense().T @ V) for A, B in ode.terms)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)
        assert record.kind == "k_step" and record.within_contract

    def test_l_step_equation(self, small_complex_ode, rng):
        """Test that L - dt sum conj(B_j) L (U^H A_j U)^H = rhs"""
        ode = small_complex_ode
        U = random_factorization(rng, 6, 6, 3, complex_=True).U
        rhs = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        L, record = solve_tall_sylvester(ode, U, 0.1, rhs, Side.L)
        lhs = L - 0.1 * sum(np.conj(B.dense()) @ L @ (U.conj().T @ A.dense() @ U).conj().T for A, B in ode.terms)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)
        assert record.kind == "l_step"

    def test_matches_dense_solve(self, small_real_ode, rng):
        """Test the GMRES solution against a dense solve of the vectorized system"""
        V = random_factorization(rng, 7, 7, 3).V
        rhs = rng.standard_normal((8, 3))
        spec = tall_spec(small_real_ode, V, 0.2, rhs, Side.K)
        expected = np.linalg.solve(sylvester_dense_matrix(spec), rhs.reshape(-1, order="F"))
        K, _ = solve_sylvester_spec(spec, 1e-13)
        assert np.allclose(K.reshape(-1, order="F"), expected, atol=1e-10)

    def test_jacobi_preconditioner(self, small_real_ode, rng, monkeypatch):
        """Test that the Jacobi-preconditioned solve reaches the same solution"""
        V = random_factorization(rng, 7, 7, 2).V
        rhs = rng.standard_normal((8, 2))
        plain, _ = solve_tall_sylvester(small_real_ode, V, 0.2, rhs, Side.K)
        monkeypatch.setattr(solver_config, "USE_JACOBI_PRECONDITIONER", True)
        spec = tall_spec(small_real_ode, V, 0.2, rhs, Side.K)
        assert np.allclose(spec.jacobi_diagonal(), np.diag(sylvester_dense_matrix(spec)))
        preconditioned, _ = solve_tall_sylvester(small_real_ode, V, 0.2, rhs, Side.K)
        assert np.allclose(plain, preconditioned, atol=1e-9)

    def test_trivial_cases(self, small_real_ode, rng):
        """Test that a zero right-hand side is solved without iterating"""
        V = random_factorization(rng, 7, 7, 2).V
        K, record = solve_tall_sylvester(small_real_ode, V, 0.2, np.zeros((8, 2)), Side.K)
        assert np.array_equal(K, np.zeros((8, 2)))
        assert record.method == "trivial"

    def test_basis_shape_checked(self, small_real_ode, rng):
        """Test that a basis of the wrong size is rejected"""
        with pytest.raises(InvalidInputError):
            tall_spec(small_real_ode, np.eye(8)[:, :2], 0.1, np.ones((8, 2)), Side.K)

    def test_failure_raises(self, rng, monkeypatch):
        """Test that an unconverged solve raises SolverFailureError"""
        monkeypatch.setattr(solver_config, "KRYLOV_RESTART", 1)
        monkeypatch.setattr(solver_config, "KRYLOV_MAX_ITER", 1)
        monkeypatch.setattr(solver_config, "KRYLOV_REFINEMENTS", 0)
        M = rng.standard_normal((20, 20)) * 3.0
        spec = SylvesterSpec(left_ops=(lambda X: M @ X,), right_ops=(np.eye(1),), shift=1.0,
                             rhs=rng.standard_normal((20, 1)))
        with pytest.raises(SolverFailureError):
            solve_sylvester_spec(spec, 1e-12)

    def test_spec_validates_coefficients(self):
        """Test that mismatched right coefficients are rejected"""
        with pytest.raises(InvalidInputError):
            SylvesterSpec(left_ops=(lambda X: X,), right_ops=(np.eye(3),), shift=1.0, rhs=np.ones((4, 2)))

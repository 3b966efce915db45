"""Tests for the dense kernels"""

import numpy as np
import pytest

from lowrank_sdc.dense import (
    ScalarField,
    as_matrix,
    inner,
    kron_sum_matrix,
    qr_column_pivoted,
    solve_dense,
    solve_kron_sum,
    svd,
)
from lowrank_sdc.errors import InvalidInputError, SingularSystemError


pytestmark = pytest.mark.unit


class TestAsMatrix:
    """Tests for input normalization"""

    def test_integer_input_becomes_float(self):
        """Test that integer arrays are promoted to float64"""
        M = as_matrix([[1, 2], [3, 4]])
        assert M.dtype == np.float64

    def test_complex_input_keeps_field(self):
        """Test that complex arrays stay complex128"""
        M = as_matrix(np.array([[1 + 1j]], dtype=np.complex64))
        assert M.dtype == np.complex128

    def test_rejects_vectors(self):
        """Test that 1-D input is rejected"""
        with pytest.raises(InvalidInputError):
            as_matrix(np.ones(3))

    def test_rejects_non_finite(self):
        """Test that NaN entries are rejected"""
        with pytest.raises(InvalidInputError):
            as_matrix([[1.0, np.nan]])


class TestScalarField:
    """Tests for the scalar field enum"""

    def test_tags_round_trip(self):
        """Test that the cache tags map back to their field"""
        for field_ in ScalarField:
            assert ScalarField.from_tag(field_.tag) is field_

    def test_unknown_tag(self):
        """Test that an unknown tag raises"""
        with pytest.raises(InvalidInputError):
            ScalarField.from_tag(7)

    def test_of_array(self):
        """Test field detection from arrays"""
        assert ScalarField.of(np.zeros(2)) is ScalarField.REAL
        assert ScalarField.of(np.zeros(2, dtype=complex)) is ScalarField.COMPLEX

    def test_inner_conjugates_first_argument(self):
        """Test that the Frobenius inner product conjugates its first argument"""
        A = np.array([[1j]])
        B = np.array([[1.0]])
        assert inner(A, B) == pytest.approx(-1j)


class TestQrColumnPivoted:
    """Tests for rank-revealing QR"""

    def test_full_rank_reconstruction(self, rng):
        """Test that M[:, P] = Q R for a full-rank matrix"""
        M = rng.standard_normal((9, 5))
        Q, R, P = qr_column_pivoted(M)
        assert Q.shape == (9, 5)
        assert np.allclose(M[:, P], Q @ R, atol=1e-12)
        assert np.allclose(Q.T @ Q, np.eye(5), atol=1e-12)

    def test_dependent_columns_are_dropped(self, rng):
        """Test that the returned Q has as many columns as the numerical rank"""
        B = rng.standard_normal((10, 3))
        M = np.hstack([B, B @ rng.standard_normal((3, 4))])
        Q, R, P = qr_column_pivoted(M)
        assert Q.shape[1] == 3
        assert np.allclose(M[:, P], Q @ R, atol=1e-10)

    def test_zero_matrix_has_rank_zero(self):
        """Test that an all-zero matrix yields an empty basis"""
        Q, R, _ = qr_column_pivoted(np.zeros((4, 2)))
        assert Q.shape == (4, 0)
        assert R.shape == (0, 2)

    def test_complex(self, rng):
        """Test complex input"""
        M = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        Q, R, P = qr_column_pivoted(M)
        assert np.iscomplexobj(Q)
        assert np.allclose(M[:, P], Q @ R, atol=1e-12)

    def test_needs_columns(self):
        """Test that a matrix without columns is rejected"""
        with pytest.raises(InvalidInputError):
            qr_column_pivoted(np.zeros((3, 0)))


class TestSvd:
    """Tests for the reduced SVD"""

    @pytest.mark.parametrize("shape", [(7, 4), (4, 7), (5, 5)])
    def test_reconstruction(self, rng, shape):
        """Test that U diag(s) V^H reproduces the input"""
        M = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        U, s, V = svd(M)
        assert np.all(np.diff(s) <= 0)
        assert np.allclose((U * s) @ V.conj().T, M, atol=1e-12)

    def test_real_stays_real(self, rng):
        """Test that a real input gives real factors"""
        U, _, V = svd(rng.standard_normal((5, 3)))
        assert np.isrealobj(U) and np.isrealobj(V)

    def test_empty(self):
        """Test that an empty matrix gives empty factors"""
        U, s, V = svd(np.zeros((3, 0)))
        assert U.shape == (3, 0) and s.shape == (0,) and V.shape == (0, 0)


class TestSolveDense:
    """Tests for the LU solve"""

    def test_matrix_rhs(self, rng):
        """Test a well-conditioned solve with several right-hand sides"""
        A = np.eye(6) * 4 + rng.standard_normal((6, 6))
        B = rng.standard_normal((6, 2))
        X = solve_dense(A, B)
        assert np.allclose(A @ X, B, atol=1e-12)

    def test_vector_rhs_keeps_shape(self, rng):
        """Test that a vector right-hand side returns a vector"""
        A = np.eye(3) * 2
        x = solve_dense(A, np.array([2.0, 4.0, 6.0]))
        assert x.shape == (3,)
        assert np.allclose(x, [1.0, 2.0, 3.0])

    def test_singular_raises(self):
        """Test that a singular matrix raises SingularSystemError"""
        with pytest.raises(SingularSystemError):
            solve_dense(np.ones((3, 3)), np.ones(3))

    def test_non_square(self):
        """Test that a non-square matrix is rejected"""
        with pytest.raises(InvalidInputError):
            solve_dense(np.ones((3, 2)), np.ones(3))


class TestKronSum:
    """Tests for the Kronecker-structured solve"""

    def test_matrix_matches_operator(self, rng):
        """Test that the assembled matrix acts like X -> X - shift sum A X B^T"""
        A = [rng.standard_normal((4, 4)) for _ in range(2)]
        B = [rng.standard_normal((3, 3)) for _ in range(2)]
        X = rng.standard_normal((4, 3))
        expected = X - 0.3 * sum(a @ X @ b.T for a, b in zip(A, B))
        vec = kron_sum_matrix(A, B, 0.3) @ X.reshape(-1, order="F")
        assert np.allclose(vec.reshape(4, 3, order="F"), expected, atol=1e-12)

    def test_solve(self, rng):
        """Test that the solution satisfies the Sylvester equation"""
        A = [rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))]
        B = [rng.standard_normal((4, 4))]
        rhs = rng.standard_normal((5, 4))
        S = solve_kron_sum(A, B, 0.1, rhs)
        assert np.allclose(S - 0.1 * A[0] @ S @ B[0].T, rhs, atol=1e-12)

    def test_mismatched_factor_counts(self, rng):
        """Test that unequal left/right lists are rejected"""
        with pytest.raises(InvalidInputError):
            kron_sum_matrix([np.eye(2)], [], 1.0)

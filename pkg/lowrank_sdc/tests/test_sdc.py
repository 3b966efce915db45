"""Tests for Gauss-Lobatto grids, tolerance schedules and the SDC drivers"""

import math

import numpy as np
import pytest

import lowrank_sdc.sdc as sdc_module
from lowrank_sdc.errors import InvalidInputError, InvalidParameterError, SolverFailureError
from lowrank_sdc.lowrank import Factorization, TruncationMode
from lowrank_sdc.mbug import mbug_step
from lowrank_sdc.reference import implicit_euler_dense
from lowrank_sdc.sdc import (
    LevelState,
    ToleranceSchedule,
    integrate,
    lobatto_grid,
    order_parameters,
    sdc_dense_step,
    sdc_mbug_step,
)
from .conftest import random_factorization, stable_ode

HARD, SOFT = TruncationMode.HARD, TruncationMode.SOFT


class TestLobattoGrid:
    """Tests for subnodes and the quadrature weight table"""

    def test_trapezoid(self):
        """Test that P = 1 gives the endpoints and the trapezoidal rule"""
        grid = lobatto_grid(1, 0.0, 2.0)
        assert np.array_equal(grid.nodes, [0.0, 2.0])
        assert np.allclose(grid.weights, [[0.5, 0.5]])

    def test_three_point_weights(self):
        """Test the P = 2 table on [-1, 1]"""
        grid = lobatto_grid(2, -1.0, 1.0)
        assert np.allclose(grid.nodes, [-1.0, 0.0, 1.0], atol=1e-15)
        assert np.allclose(grid.weights[0], [5.0 / 12.0, 2.0 / 3.0, -1.0 / 12.0], atol=1e-14)
        assert np.allclose(grid.weights[1], [-1.0 / 12.0, 2.0 / 3.0, 5.0 / 12.0], atol=1e-14)

    def test_simpson_over_full_interval(self):
        """Test that the subinterval weights telescope to Simpson's rule"""
        grid = lobatto_grid(2, 0.0, 1.0)
        assert np.allclose(grid.full_interval_weights(), [1 / 6, 2 / 3, 1 / 6], atol=1e-14)

    @pytest.mark.parametrize("P", range(1, 7))
    def test_monomials_integrated_exactly(self, P):
        """Test exactness on t^q, q <= P, for every subinterval"""
        grid = lobatto_grid(P, 0.0, 1.0)
        for q in range(P + 1):
            values = grid.nodes**q
            for m in range(P):
                a, b = grid.nodes[m], grid.nodes[m + 1]
                approx = grid.sub_steps[m] * grid.weights[m] @ values
                assert approx == pytest.approx((b ** (q + 1) - a ** (q + 1)) / (q + 1), abs=1e-13)

    @pytest.mark.parametrize("P", range(1, 7))
    def test_nodes_and_telescoping(self, P):
        """Test endpoints, monotone nodes and rows summing to one"""
        grid = lobatto_grid(P, 1.0, 3.0)
        assert grid.t0 == 1.0 and grid.t1 == 3.0
        assert np.all(np.diff(grid.nodes) > 0)
        assert np.allclose(grid.weights.sum(axis=1), 1.0, atol=1e-13)
        assert grid.full_interval_weights().sum() == pytest.approx(2.0)

    def test_invalid(self):
        """Test that P < 1 and empty intervals are rejected"""
        with pytest.raises(InvalidParameterError):
            lobatto_grid(0, 0.0, 1.0)
        with pytest.raises(InvalidParameterError):
            lobatto_grid(2, 1.0, 1.0)


class TestToleranceSchedule:
    """Tests for level-dependent tolerances"""

    def test_levels(self):
        """Test the tolerance arithmetic for h = pi/320, K = 3, C = 50/pi"""
        C, h = 50.0 / math.pi, math.pi / 320
        sched = ToleranceSchedule(C=C, h=h, K=3)
        assert sched.eps_f == pytest.approx(C * h)
        assert sched.eps_s == pytest.approx(C * h**2)
        for k in range(1, 4):
            assert sched.eps_f_level(k) == pytest.approx(C * h ** (k + 1))
            assert sched.eps_r_level(k) == pytest.approx(C * h ** (k + 2))
            assert sched.eps_s_level(k + 1) == pytest.approx(sched.eps_r_level(k))
        assert sched.eps_s_level(1) == pytest.approx(sched.eps_s)

    def test_from_grid(self):
        """Test that a 200 x 200 grid gives C = 50/pi"""
        sched = ToleranceSchedule.from_grid(200, 200, 0.1, 2)
        assert sched.C == pytest.approx(50.0 / math.pi)

    def test_level_bounds(self):
        """Test that out-of-range levels are rejected"""
        sched = ToleranceSchedule(C=1.0, h=0.1, K=2)
        with pytest.raises(InvalidParameterError):
            sched.eps_f_level(0)
        with pytest.raises(InvalidParameterError):
            sched.eps_r_level(3)
        with pytest.raises(InvalidParameterError):
            sched.eps_s_level(4)

    def test_invalid(self):
        """Test that negative constants and steps are rejected"""
        with pytest.raises(InvalidParameterError):
            ToleranceSchedule(C=-1.0, h=0.1, K=1)
        with pytest.raises(InvalidParameterError):
            ToleranceSchedule(C=1.0, h=0.0, K=1)

    def test_exact(self):
        """Test that the exact schedule has zero tolerances"""
        sched = ToleranceSchedule.exact(0.1, 2)
        assert sched.eps_f == 0.0 and sched.eps_r_level(2) == 0.0


class TestLevelState:
    """Tests for the per-sweep container"""

    def test_rhs_defaults(self, rng):
        """Test that missing right-hand sides default to None per node"""
        level = LevelState(states=[Factorization.zeros(2, 2)] * 3)
        assert level.rhs == [None, None, None]
        assert level.P == 2

    def test_length_mismatch(self):
        """Test that unequal list lengths are rejected"""
        with pytest.raises(InvalidInputError):
            LevelState(states=[Factorization.zeros(2, 2)], rhs=[None, None])


class TestDenseSdc:
    """Tests for the full-rank SDC oracle"""

    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_observed_order(self, scalar_decay_ode, K):
        """Test that x' = -x converges with order close to K + 1"""
        errors = []
        for steps in (20, 40):
            h = 1.0 / steps
            X = np.ones((1, 1))
            for n in range(steps):
                X = sdc_dense_step(scalar_decay_ode, X, lobatto_grid(K, n * h, (n + 1) * h), K)
            errors.append(abs(X[0, 0] - math.exp(-1.0)))
        assert math.log2(errors[0] / errors[1]) >= K + 0.7

    def test_no_corrections_is_implicit_euler(self, small_real_ode, rng):
        """Test that K = 0 on one subinterval is one implicit Euler step"""
        X = rng.standard_normal((8, 7))
        out = sdc_dense_step(small_real_ode, X, lobatto_grid(1, 0.0, 0.1), 0)
        assert np.allclose(out, implicit_euler_dense(small_real_ode, X, 0.0, 0.1), atol=1e-13)


class TestSdcMbugStep:
    """Tests for one low-rank SDC-mBUG macro step"""

    @pytest.mark.parametrize("order", [2, 3, 4])
    @pytest.mark.parametrize("complex_", [False, True])
    def test_exact_schedule_matches_dense(self, order, complex_):
        """Test that zero tolerances and full-rank data reproduce dense SDC"""
        rng = np.random.default_rng(order)
        ode = stable_ode(rng, 8, 8, n_terms=3, complex_=complex_, with_source=True)
        X = random_factorization(rng, 8, 8, 8, complex_=complex_)
        K, P = order_parameters(order)
        h = 0.1
        out, diagnostics = sdc_mbug_step(ode, X, 0.3, h, K, P, ToleranceSchedule.exact(h, K), HARD)
        expected = sdc_dense_step(ode, X.to_dense(), lobatto_grid(P, 0.3, 0.3 + h), K)
        assert np.max(np.abs(out.to_dense() - expected)) <= 1e-8
        assert len(diagnostics.stage1) == P
        assert len(diagnostics.corrections) == K * P
        assert diagnostics.max_basis_defect() < 1e-10

    def test_no_corrections_chains_mbug_steps(self, small_real_ode, rng):
        """Test that K = 0 is a chain of mBUG steps over the subnodes"""
        X = random_factorization(rng, 8, 7, 2)
        sched = ToleranceSchedule(C=0.5, h=0.2, K=0)
        out, _ = sdc_mbug_step(small_real_ode, X, 0.0, 0.2, 0, 2, sched, SOFT)
        grid = lobatto_grid(2, 0.0, 0.2)
        chained = X
        for m in range(2):
            chained, _ = mbug_step(small_real_ode, chained, grid.nodes[m], grid.sub_steps[m],
                                   sched.eps_f, sched.eps_s, SOFT)
        assert np.allclose(out.to_dense(), chained.to_dense(), atol=1e-13)

    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_prediction_solves_use_final_tolerance(self, small_real_ode, rng, monkeypatch, K):
        """Test that the prediction K/L solves are resolved to C h^(K+2)"""
        seen = []

        def recording(*args, **kwargs):
            seen.append(kwargs["solve_eps"])
            return mbug_step(*args, **kwargs)

        monkeypatch.setattr(sdc_module, "mbug_step", recording)
        X = random_factorization(rng, 8, 7, 2)
        sched = ToleranceSchedule(C=2.0, h=0.1, K=K)
        _, diagnostics = sdc_mbug_step(small_real_ode, X, 0.0, 0.1, K, K, sched, HARD)
        assert seen == [2.0 * 0.1 ** (K + 2)] * K
        for report in diagnostics.stage1:
            assert all(record.within_contract for record in report.solves)

    def test_schedule_too_short(self, small_real_ode, rng):
        """Test that a schedule with fewer levels than K is rejected"""
        X = random_factorization(rng, 8, 7, 1)
        with pytest.raises(InvalidParameterError):
            sdc_mbug_step(small_real_ode, X, 0.0, 0.1, 2, 2, ToleranceSchedule(C=1.0, h=0.1, K=1), HARD)

    def test_prediction_failure_is_located(self, small_real_ode, rng, monkeypatch):
        """Test that a failed prediction solve is tagged with level 0"""
        def failing(*args, **kwargs):
            raise SolverFailureError("K-step did not converge", residual=1.0)

        monkeypatch.setattr(sdc_module, "mbug_step", failing)
        X = random_factorization(rng, 8, 7, 1)
        with pytest.raises(SolverFailureError) as excinfo:
            sdc_mbug_step(small_real_ode, X, 0.0, 0.1, 1, 2, ToleranceSchedule(C=1.0, h=0.1, K=1), HARD)
        assert excinfo.value.location == (0, 0)

    def test_correction_failure_is_located(self, small_real_ode, rng, monkeypatch):
        """Test that a failed correction solve is tagged with its level"""
        def failing(*args, **kwargs):
            raise SolverFailureError("S-step did not converge", residual=1.0)

        monkeypatch.setattr(sdc_module, "galerkin_update", failing)
        X = random_factorization(rng, 8, 7, 1)
        with pytest.raises(SolverFailureError) as excinfo:
            sdc_mbug_step(small_real_ode, X, 0.0, 0.1, 1, 2, ToleranceSchedule(C=1.0, h=0.1, K=1), HARD)
        assert excinfo.value.location == (1, 0)


class TestIntegrate:
    """Tests for the multi-step driver"""

    def test_order_parameters(self):
        """Test the (K, P) pairs per nominal order"""
        assert order_parameters(1) == (0, 1)
        assert order_parameters(2) == (1, 1)
        assert order_parameters(4) == (3, 3)
        with pytest.raises(InvalidParameterError):
            order_parameters(5)

    def test_single_step_matches_macro_step(self, small_real_ode, rng):
        """Test that one integration step is one macro step"""
        X = random_factorization(rng, 8, 7, 2)
        trajectory = integrate(small_real_ode, X, 0.0, 0.2, 1, 3, HARD, 0.5)
        K, P = order_parameters(3)
        direct, _ = sdc_mbug_step(small_real_ode, X, 0.0, 0.2, K, P, ToleranceSchedule(C=0.5, h=0.2, K=K), HARD)
        assert np.allclose(trajectory.final.to_dense(), direct.to_dense(), atol=1e-13)

    def test_trajectory_bookkeeping(self, small_real_ode, rng):
        """Test ranks, kept states and diagnostics along a run"""
        X = random_factorization(rng, 8, 7, 2)
        trajectory = integrate(small_real_ode, X, 0.0, 1.0, 6, 2, SOFT, 1.0, state_stride=3)
        assert len(trajectory.points) == 7
        assert trajectory.points[-1].t == 1.0
        kept = [i for i, p in enumerate(trajectory.points) if p.state is not None]
        assert kept == [0, 3, 6]
        assert [r for _, r in trajectory.ranks()] == [p.rank for p in trajectory.points]
        assert len(trajectory.diagnostics) == 6
        assert all(record.within_contract for record in trajectory.solves())

    def test_invalid(self, small_real_ode, rng):
        """Test that invalid step counts and intervals are rejected"""
        X = random_factorization(rng, 8, 7, 1)
        with pytest.raises(InvalidParameterError):
            integrate(small_real_ode, X, 0.0, 1.0, 0, 2, HARD, 1.0)
        with pytest.raises(InvalidParameterError):
            integrate(small_real_ode, X, 1.0, 1.0, 4, 2, HARD, 1.0)

#!/usr/bin/env python3
"""
Tests for babenko_waves/continuation.py

Traces run on N = 32 and stop at small amplitudes so the suite stays fast.
"""

import numpy as np
import pytest

from babenko_waves.babenko_eq import BabenkoSystem, WaveSolution, asymptotic_seed
from babenko_waves.continuation import (
    ContinuationConfig,
    TraceRequest,
    _admissible,
    _fold_event,
    _underflow_kind,
    newton_solve,
    refine,
    trace_branch,
    trace_from,
    trace_many,
)
from babenko_waves.errors import NoConvergence, SingularJacobian
from babenko_waves.models import EventKind, PointKind
from babenko_waves.spectral import CosineSeries, OperatorParams, SpectralGrid, multiplier_mu

GRID = SpectralGrid(32)


@pytest.fixture
def small_config():
    return ContinuationConfig(initial_step=1e-3, max_step=5e-3, max_amplitude=0.03, max_modes=32)


@pytest.fixture
def c1_branch(small_config):
    return trace_branch(1, OperatorParams(0.8), small_config, GRID)


def _converged(r=0.8, n=1, a=0.01, config=None):
    config = config or ContinuationConfig()
    params = OperatorParams(r)
    return newton_solve(asymptotic_seed(n, a, params, GRID), a, config, params)


class TestContinuationConfig:
    def test_defaults_are_valid(self):
        config = ContinuationConfig()
        assert config.min_step < config.initial_step <= config.max_step

    def test_collects_every_violation(self):
        with pytest.raises(ValueError) as e:
            ContinuationConfig(min_step=1.0, step_shrink=1.5, max_points=0)
        message = str(e.value)
        assert "step sizes" in message
        assert "step_shrink" in message
        assert "max_points" in message

    def test_negative_tolerance(self):
        with pytest.raises(ValueError):
            ContinuationConfig(newton_tol=-1e-10)

    def test_crest_bound_tol_is_round_off_only(self):
        with pytest.raises(ValueError, match="crest_bound_tol"):
            ContinuationConfig(crest_bound_tol=2.5e-3)

    def test_for_mode_divides_steps(self):
        config = ContinuationConfig(initial_step=3e-3, max_step=6e-3, min_step=3e-7)
        scaled = config.for_mode(3)
        assert scaled.initial_step == pytest.approx(1e-3)
        assert scaled.max_step == pytest.approx(2e-3)
        assert scaled.min_step == pytest.approx(1e-7)
        assert scaled.max_amplitude == config.max_amplitude
        assert config.for_mode(1) is config


class TestNewton:
    def test_converges_from_seed(self):
        sol = _converged(a=0.01)
        params = OperatorParams(0.8)
        R = BabenkoSystem(GRID, params).residual(sol.mu, sol.coeffs)
        assert np.max(np.abs(R)) <= 1e-10
        assert sol.amplitude == pytest.approx(0.01, abs=1e-12)
        assert abs(sol.mu - multiplier_mu(1, 0.8)) < 10 * 0.01**2

    def test_zero_target_returns_zero_solution(self):
        params = OperatorParams(0.8)
        guess = asymptotic_seed(1, 0.01, params, GRID)
        sol = newton_solve(guess, 0.0, ContinuationConfig(), params)
        assert sol.amplitude == 0.0
        assert sol.mu == guess[0]
        assert np.all(sol.coeffs.coeffs == 0.0)

    def test_negative_target(self):
        params = OperatorParams(0.8)
        with pytest.raises(ValueError):
            newton_solve(asymptotic_seed(1, 0.01, params, GRID), -0.01, ContinuationConfig(), params)

    def test_sign_of_seed_is_a_half_period_shift(self):
        params = OperatorParams(0.8)
        config = ContinuationConfig()
        plus = newton_solve(asymptotic_seed(1, 0.02, params, GRID), 0.02, config, params)
        minus = newton_solve(asymptotic_seed(1, -0.02, params, GRID), 0.02, config, params)
        signs = (-1.0) ** np.arange(GRID.N)
        assert minus.mu == pytest.approx(plus.mu, abs=1e-12)
        assert np.allclose(minus.coeffs.coeffs, signs * plus.coeffs.coeffs, atol=1e-10)

    def test_iteration_cap(self):
        params = OperatorParams(0.8)
        config = ContinuationConfig(max_newton_iters=1)
        with pytest.raises(NoConvergence) as e:
            newton_solve(asymptotic_seed(1, 0.05, params, GRID), 0.05, config, params)
        assert e.value.iterate is not None

    def test_condition_limit(self):
        params = OperatorParams(0.8)
        config = ContinuationConfig(cond_limit=1.0)
        with pytest.raises(SingularJacobian):
            newton_solve(asymptotic_seed(1, 0.01, params, GRID), 0.01, config, params)

    def test_accepts_wave_solution_guess(self):
        sol = _converged(a=0.01)
        again = newton_solve(sol, 0.012, ContinuationConfig(), OperatorParams(0.8))
        assert again.amplitude == pytest.approx(0.012, abs=1e-12)


class TestTraceBranch:
    def test_reaches_max_amplitude(self, c1_branch):
        assert c1_branch.termination.kind == EventKind.TERMINATION_MAX_AMPLITUDE
        assert c1_branch.last.amplitude == pytest.approx(0.03, abs=1e-10)

    def test_origin_is_primary_point(self, c1_branch):
        origin = c1_branch.origin
        assert origin.kind == PointKind.PRIMARY
        assert origin.mode == 1
        assert origin.mu_star == pytest.approx(0.219512195122, abs=1e-12)
        assert origin.null_direction.coeffs[1] == 1.0

    def test_every_point_converged_and_bounded(self, c1_branch):
        system = BabenkoSystem(GRID, OperatorParams(0.8))
        for p in c1_branch.points:
            assert np.max(np.abs(system.residual(p.mu, p.coeffs))) <= 1e-9
            assert p.peak_elevation() <= 0.5 * p.mu

    def test_theta_nondecreasing(self, c1_branch):
        assert np.all(np.diff(c1_branch.thetas()) >= 0)

    def test_amplitude_steps_bounded(self, c1_branch, small_config):
        steps = np.diff(c1_branch.amplitudes())
        assert np.all(steps > 0)
        assert np.all(steps <= small_config.max_step + 1e-15)

    def test_zero_max_amplitude_gives_trivial_point(self):
        branch = trace_branch(1, OperatorParams(0.8), ContinuationConfig(max_amplitude=0.0), GRID)
        assert len(branch) == 1
        assert branch.last.amplitude == 0.0
        assert branch.last.mu == pytest.approx(multiplier_mu(1, 0.8), abs=1e-15)
        assert branch.termination.kind == EventKind.TERMINATION_MAX_AMPLITUDE

    def test_max_points(self):
        config = ContinuationConfig(max_points=3)
        branch = trace_branch(2, OperatorParams(0.8), config, GRID)
        assert len(branch) == 3
        assert branch.termination.kind == EventKind.TERMINATION_MAX_POINTS

    def test_deep_water_speed_grows_quadratically(self):
        config = ContinuationConfig(initial_step=2e-3, max_step=4e-3, max_amplitude=0.04)
        branch = trace_branch(1, OperatorParams(0.0), config, GRID)
        a = branch.amplitudes()
        dmu = branch.mus() - 1.0
        keep = a >= 0.005
        slope = np.polyfit(np.log(a[keep]), np.log(np.abs(dmu[keep])), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.2)

    def test_mode_steps_scaled(self):
        config = ContinuationConfig(initial_step=3e-3, max_step=6e-3, max_amplitude=0.012, max_modes=32)
        branch = trace_branch(3, OperatorParams(0.8), config, GRID)
        assert branch.points[0].amplitude == pytest.approx(1e-3, abs=1e-12)
        assert np.all(np.diff(branch.amplitudes()) <= 2e-3 + 1e-15)
        assert branch.last.amplitude == pytest.approx(0.012, abs=1e-10)

    def test_invalid_sign(self, small_config):
        with pytest.raises(ValueError):
            trace_branch(1, OperatorParams(0.8), small_config, GRID, sign=0)

    def test_mode_not_representable(self, small_config):
        with pytest.raises(ValueError):
            trace_branch(32, OperatorParams(0.8), small_config, GRID)


class TestTraceFrom:
    def test_downward_trace_stops_at_floor(self, c1_branch):
        config = ContinuationConfig(initial_step=5e-3, max_step=5e-3)
        down = trace_from([c1_branch.last], c1_branch.params, config, c1_branch.origin, direction=-1)
        assert down.termination.kind == EventKind.TERMINATION_MAX_AMPLITUDE
        assert np.all(np.diff(down.amplitudes()) < 0)
        assert down.last.amplitude > 0.0

    def test_strict_mode_raises_with_partial_branch(self):
        start = _converged(a=0.01)
        config = ContinuationConfig(
            max_newton_iters=1, initial_step=1e-2, max_step=1e-2, min_step=6e-3, strict=True
        )
        origin = trace_branch(1, OperatorParams(0.8), ContinuationConfig(max_amplitude=0.0), GRID).origin
        with pytest.raises(NoConvergence) as e:
            trace_from([start], OperatorParams(0.8), config, origin)
        partial = e.value.partial
        assert partial is not None
        assert len(partial) == 1
        assert partial.termination.kind == EventKind.TERMINATION_NO_CONVERGENCE

    def test_non_strict_mode_records_termination(self):
        start = _converged(a=0.01)
        config = ContinuationConfig(max_newton_iters=1, initial_step=1e-2, max_step=1e-2, min_step=6e-3)
        origin = trace_branch(1, OperatorParams(0.8), ContinuationConfig(max_amplitude=0.0), GRID).origin
        branch = trace_from([start], OperatorParams(0.8), config, origin)
        assert len(branch) == 1
        assert branch.termination.kind == EventKind.TERMINATION_NO_CONVERGENCE

    def test_bad_direction(self, c1_branch, small_config):
        with pytest.raises(ValueError):
            trace_from(c1_branch.points, c1_branch.params, small_config, c1_branch.origin, direction=0)


class TestResolutionDoubling:
    @staticmethod
    def _config(max_modes):
        return ContinuationConfig(
            initial_step=2e-3, max_step=5e-3, max_amplitude=0.02, max_modes=max_modes, tail_tol=1e-300
        )

    def test_branch_moves_to_finer_grid(self):
        params = OperatorParams(0.8)
        branch = trace_branch(1, params, self._config(64), SpectralGrid(16))
        assert branch.n_modes == 64
        assert all(p.n_modes == 64 for p in branch.points)
        system = BabenkoSystem(SpectralGrid(64), params)
        for p in branch.points:
            assert np.max(np.abs(system.residual(p.mu, p.coeffs))) <= 1e-9
        assert np.all(np.diff(branch.amplitudes()) > 0)
        assert branch.last.amplitude == pytest.approx(0.02, abs=1e-10)

    def test_cap_keeps_the_starting_grid(self):
        branch = trace_branch(1, OperatorParams(0.8), self._config(16), SpectralGrid(16))
        assert all(p.n_modes == 16 for p in branch.points)

    def test_finer_grid_agrees_with_coarse_one(self):
        params = OperatorParams(0.8)
        coarse = trace_branch(1, params, self._config(16), SpectralGrid(16))
        fine = trace_branch(1, params, self._config(64), SpectralGrid(16))
        assert fine.last.mu == pytest.approx(coarse.last.mu, abs=1e-6)


class TestCrestBound:
    @staticmethod
    def _cosine(mu, a=0.1):
        c = np.zeros(8)
        c[1] = a
        return WaveSolution.build(mu, 0.5, CosineSeries(c))

    def test_bound_is_exact_up_to_round_off(self):
        config = ContinuationConfig()
        assert _admissible(self._cosine(0.2), config)
        assert _admissible(self._cosine(0.2 - 1e-13), config)
        assert not _admissible(self._cosine(0.2 - 1e-9), config)
        assert not _admissible(self._cosine(0.2 - 2.5e-3), config)

    def test_stall_on_a_smooth_crest_is_not_extreme(self):
        smooth = _converged(a=0.01)
        assert _underflow_kind(smooth, at_crest_bound=True) == EventKind.TERMINATION_CREST_BOUND
        assert _underflow_kind(smooth, at_crest_bound=False) == EventKind.TERMINATION_NO_CONVERGENCE


class TestFoldDetection:
    @staticmethod
    def _flat(mu, a):
        # constant series: amplitude is exactly a
        c = np.zeros(8)
        c[0] = a
        return WaveSolution.build(mu, 0.5, CosineSeries(c))

    def test_turning_point_in_mu(self):
        points = [self._flat(0.30, 0.10), self._flat(0.31, 0.11), self._flat(0.305, 0.12)]
        event = _fold_event(points)
        assert event is not None
        assert event.kind == EventKind.FOLD
        assert event.index == 1
        assert 0.10 <= event.amplitude <= 0.12
        assert event.mu >= 0.31
        assert event.detail["located"] is False
        assert event.detail["vinf"] == event.amplitude

    def test_monotone_mu_has_no_fold(self):
        points = [self._flat(0.30, 0.10), self._flat(0.31, 0.11), self._flat(0.32, 0.12)]
        assert _fold_event(points) is None


class TestRefine:
    def test_refinement_keeps_mu(self):
        sol = _converged(a=0.02)
        fine = refine(sol, OperatorParams(0.8), ContinuationConfig())
        assert fine.n_modes == 2 * sol.n_modes
        assert abs(fine.mu - sol.mu) < 1e-8
        assert np.allclose(fine.coeffs.coeffs[: sol.n_modes], sol.coeffs.coeffs, atol=1e-8)

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            refine(_converged(), OperatorParams(0.8), ContinuationConfig(), factor=0)


class TestTraceMany:
    def test_keeps_order_and_reports_errors(self, small_config):
        requests = [
            TraceRequest(mode=1, r=0.8, n_modes=32),
            TraceRequest(mode=40, r=0.8, n_modes=32),
            TraceRequest(mode=2, r=0.0, n_modes=32),
        ]
        outcomes = trace_many(requests, small_config, jobs=2)
        assert [o.request for o in outcomes] == requests
        assert outcomes[0].branch is not None and outcomes[0].error is None
        assert isinstance(outcomes[1].error, ValueError)
        assert outcomes[2].branch.origin.mu_star == 0.5

    def test_sequential_matches_parallel(self, small_config):
        requests = [TraceRequest(mode=1, r=0.8, n_modes=32), TraceRequest(mode=1, r=0.5, n_modes=32)]
        serial = trace_many(requests, small_config, jobs=1)
        parallel = trace_many(requests, small_config, jobs=2)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.branch.mus(), b.branch.mus())

    def test_bad_jobs(self, small_config):
        with pytest.raises(ValueError):
            trace_many([], small_config, jobs=0)

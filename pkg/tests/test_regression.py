"""
Published-value regressions for traced branches.

These trace to folds, secondary points and extreme waves starting on
N = 512 and refining up to N = 1024, which takes minutes per branch. Run
with BABENKO_RUN_SLOW=1.
"""

import pytest

from babenko_waves.bifurcation import detect_secondary, primary_points, switch_branch
from babenko_waves.continuation import ContinuationConfig, newton_solve, refine, trace_branch
from babenko_waves.models import EventKind
from babenko_waves.reconstruct import find_crests, reconstruct, wave_summary
from babenko_waves.spectral import OperatorParams, SpectralGrid

pytestmark = pytest.mark.slow

DEEP = OperatorParams(0.0)
FINITE = OperatorParams(0.8)


def _trace(n, params, N=512, **kwargs):
    return trace_branch(n, params, ContinuationConfig(**kwargs), SpectralGrid(N))


@pytest.fixture(scope="module")
def c1_past_fold():
    return _trace(1, FINITE, max_amplitude=0.165)


@pytest.fixture(scope="module")
def c3_branch():
    return _trace(3, FINITE)


@pytest.fixture(scope="module")
def c3_extreme():
    return _trace(3, FINITE, N=1024, dealias=True)


class TestSpectrum:
    def test_published_values(self):
        mus = {p.mode: p.mu_star for p in primary_points(FINITE, 3)}
        assert mus[1] == pytest.approx(0.219512195122, abs=1e-12)
        assert mus[3] == pytest.approx(0.194868414381, abs=1e-12)

    def test_deep_water(self):
        for p in primary_points(DEEP, 10):
            assert p.mu_star == 1.0 / p.mode


class TestDeepWaterSecondary:
    @pytest.mark.parametrize("n, expected", [(2, 0.58768), (3, 0.39172), (4, 0.29389)])
    def test_first_secondary_point(self, n, expected):
        branch = _trace(n, DEEP)
        points = detect_secondary(branch)
        assert points
        assert min(abs(p.mu_star - expected) for p in points) < 5e-4


class TestFiniteDepthC1:
    def test_fold(self, c1_past_fold):
        folds = c1_past_fold.fold_estimates()
        assert len(folds) >= 1
        mu_fold, a_fold = folds[0]
        assert mu_fold == pytest.approx(0.32671, abs=1e-3)
        assert a_fold == pytest.approx(0.15862, abs=1e-3)

    def test_depth_at_fold(self, c1_past_fold):
        mu_fold, a_fold = c1_past_fold.fold_estimates()[0]
        nearest = min(c1_past_fold.points, key=lambda p: abs(p.amplitude - a_fold))
        sol = newton_solve(nearest, a_fold, ContinuationConfig(), FINITE)
        dom = reconstruct(sol)
        assert dom.h == pytest.approx(0.22739, abs=1e-4)
        assert dom.checks.surface_monotone
        assert dom.checks.bottom_monotone
        assert dom.checks.side_monotone

    def test_fold_independent_of_starting_grid(self, c1_past_fold):
        coarse = _trace(1, FINITE, N=256, max_amplitude=0.165)
        assert coarse.fold_estimates()
        assert coarse.fold_estimates()[0][0] == pytest.approx(c1_past_fold.fold_estimates()[0][0], abs=1e-4)

    def test_below_crest_bound(self, c1_past_fold):
        for p in c1_past_fold.points:
            assert p.peak_elevation() <= 0.5 * p.mu + 1e-12

    def test_mean_zero_constant(self, c1_past_fold):
        for p in c1_past_fold.points[::10]:
            summary = wave_summary(p)
            assert summary["minus_b0"] == pytest.approx(summary["B"], abs=1e-8)

    def test_refinement_is_stable(self, c1_past_fold):
        config = ContinuationConfig()
        for p in c1_past_fold.points[1:-1:20]:
            fine = refine(p, FINITE, config)
            assert abs(fine.mu - p.mu) < 1e-8


class TestFiniteDepthC3:
    def test_secondary_point(self, c3_branch):
        points = detect_secondary(c3_branch)
        assert points
        assert min(abs(p.mu_star - 0.25298) for p in points) < 1e-3

    def test_extreme_wave(self, c3_extreme):
        assert c3_extreme.termination.kind == EventKind.TERMINATION_EXTREME
        end = c3_extreme.last
        summary = wave_summary(end)
        assert abs(summary["crest_angle"] - 120.0) <= 5.0
        assert end.mu == pytest.approx(0.25175, abs=2e-3)
        assert summary["crest"] == pytest.approx(0.12777, abs=2e-3)
        assert summary["trough"] == pytest.approx(-0.03312, abs=2e-3)
        assert summary["crest_angle"] == pytest.approx(120.0, abs=2.0)

    def test_subharmonic_branch_to_extreme(self, c3_extreme):
        points = detect_secondary(c3_extreme)
        host = min(points, key=lambda p: abs(p.mu_star - 0.25298))
        config = ContinuationConfig(dealias=True)
        c31 = switch_branch(host, config, FINITE)[0].branch
        for p in c31.points:
            assert p.peak_elevation() <= 0.5 * p.mu + 1e-12

        end = c31.last
        assert end.mu == pytest.approx(0.24827, abs=2e-3)
        heights = sorted((c.y for c in find_crests(reconstruct(end))), reverse=True)
        assert heights[0] == pytest.approx(0.12608, abs=2e-3)
        assert heights[1] == pytest.approx(0.10406, abs=2e-3)
        assert wave_summary(end)["trough"] == pytest.approx(-0.03310, abs=2e-3)

"""
================================================================================
babenko_waves/reconstruct.py - Physical Wave Domain from a Babenko Solution
================================================================================

PURPOSE:
    Rebuild the one-wave flow domain from a solution w = sum b_k cos kt via
    the conformal map of the cut annulus r < |u| < 1, check the boundary
    correspondence, and measure the wave (elevation, crests, crest angle).

CONFORMAL COEFFICIENTS:
    a_k = b_k / (1 - r^{2k}),  k >= 1
    B   = 1/2 sum k a_k^2 (1 - r^{4k}) = 1/2 sum lambda_k b_k^2
    h   = B - ln r                      (h = inf for r = 0)

BOUNDARY PIECES:
    surface  x(t)   = -t - sum a_k (1 + r^{2k}) sin kt = -t - (B_r y)(t)
             y(t)   = -B + sum a_k (1 - r^{2k}) cos kt
    bottom   x_h(t) = -t - 2 sum a_k r^k sin kt,   y = -h
    sides    y(s)   = ln s - B + sum (-1)^k a_k (s^k - r^{2k} s^{-k}),
             s = |u| in [r, 1], at x = -pi (upper cut side) and x = +pi

    A converged solution has b_0 = -B, so y(t) is w(t) itself.

HOW IT WORKS:
    - series are summed densely (chunked outer products) on uniform
      parameter grids
    - correspondence checks run on 8x oversampled half-period grids:
      strict ordering of samples plus the sign of the analytic derivative
    - self-intersection of the surface polyline via shapely
    - crest angle from one-sided secant slopes at t-offsets d, 2d, 4d,
      Richardson-extrapolated to d -> 0
================================================================================
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.signal import find_peaks
from shapely.geometry import LineString

from babenko_waves.babenko_eq import WaveSolution
from babenko_waves.errors import InvertibilityFailed, NonPositiveDepth
from babenko_waves.spectral import betas, lambdas, pad_coeffs, to_values

# TUNABLE: oversampling factor for the correspondence checks
CHECK_OVERSAMPLE = 8

# Derivative values within this of zero are not counted as violations
DERIVATIVE_TOL = 1e-9

# Rows per chunk when summing series densely
_CHUNK = 2048


# =============================================================================
# SERIES HELPERS
# =============================================================================


def _one_minus_r2k(k: np.ndarray, r: float) -> np.ndarray:
    if r == 0.0:
        return np.ones_like(k, dtype=float)
    return -np.expm1(2.0 * k * np.log(r))


def conformal_coefficients(b: np.ndarray, r: float) -> np.ndarray:
    """a_k = b_k / (1 - r^{2k}) for k >= 1; a_0 is set to zero."""
    b = np.asarray(b, dtype=float)
    k = np.arange(b.shape[0], dtype=float)
    a = np.zeros_like(b)
    a[1:] = b[1:] / _one_minus_r2k(k[1:], r)
    return a


def mean_zero_constant(b: np.ndarray, r: float) -> float:
    """B = 1/2 sum_{k>=1} lambda_k b_k^2."""
    b = np.asarray(b, dtype=float)
    return 0.5 * float(np.sum(lambdas(b.shape[0], r) * b * b))


def _trig_sum(t: np.ndarray, k: np.ndarray, coef: np.ndarray, fn) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape[0])
    for start in range(0, t.shape[0], _CHUNK):
        stop = start + _CHUNK
        out[start:stop] = fn(np.outer(t[start:stop], k)) @ coef
    return out


def _cos_sum(t, k, coef):
    return _trig_sum(t, k, coef, np.cos)


def _sin_sum(t, k, coef):
    return _trig_sum(t, k, coef, np.sin)


class _Series:
    """Evaluator for the four boundary pieces of one solution."""

    def __init__(self, b: np.ndarray, r: float):
        self.b = np.asarray(b, dtype=float)
        self.r = float(r)
        self.k = np.arange(self.b.shape[0], dtype=float)
        self.a = conformal_coefficients(self.b, r)
        self.beta = betas(self.b.shape[0], r)
        self.B = mean_zero_constant(self.b, r)
        self.h = np.inf if r == 0.0 else self.B - np.log(r)

        # y uses a_k (1 - r^{2k}) = b_k for k >= 1 and -B in place of b_0
        self.y_coef = self.b.copy()
        self.y_coef[0] = -self.B
        self.x_coef = self.beta * self.b
        if r > 0.0:
            with np.errstate(under="ignore"):
                rk = np.exp(self.k * np.log(r))
            self.bottom_coef = 2.0 * self.a * rk
        else:
            self.bottom_coef = np.zeros_like(self.b)

    # surface
    def x(self, t):
        t = np.asarray(t, dtype=float)
        return -t - _sin_sum(t, self.k, self.x_coef)

    def y(self, t):
        return _cos_sum(t, self.k, self.y_coef)

    def dx(self, t):
        return -1.0 - _cos_sum(t, self.k, self.k * self.x_coef)

    # bottom
    def x_bottom(self, t):
        t = np.asarray(t, dtype=float)
        return -t - _sin_sum(t, self.k, self.bottom_coef)

    def dx_bottom(self, t):
        return -1.0 - _cos_sum(t, self.k, self.k * self.bottom_coef)

    # sides, s = |u|
    def _side_terms(self, s):
        s = np.asarray(s, dtype=float)[:, None]
        k = self.k[None, 1:]
        signs = np.where(self.k[1:] % 2 == 0, 1.0, -1.0) * self.a[1:]
        with np.errstate(under="ignore"):
            grow = np.exp(k * np.log(s))
            decay = np.exp(k * (2.0 * np.log(self.r) - np.log(s)))
        return s[:, 0], k, signs, grow, decay

    def y_side(self, s):
        s, _, signs, grow, decay = self._side_terms(s)
        return np.log(s) - self.B + (grow - decay) @ signs

    def dy_side(self, s):
        s, k, signs, grow, decay = self._side_terms(s)
        return 1.0 / s + ((k * (grow + decay)) / s[:, None]) @ signs


# =============================================================================
# DOMAIN TYPES
# =============================================================================


@dataclass(frozen=True)
class CorrespondenceReport:
    """Boundary-correspondence verdicts; worst_* are the largest wrong-sign slopes."""

    bottom_monotone: bool
    bottom_worst: float
    side_monotone: bool
    side_worst: float
    surface_monotone: bool
    surface_worst: float
    self_intersection: bool
    sample_count: int

    @property
    def ok(self) -> bool:
        return (
            self.bottom_monotone
            and self.side_monotone
            and self.surface_monotone
            and not self.self_intersection
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bottom_monotone": self.bottom_monotone,
            "bottom_worst": self.bottom_worst,
            "side_monotone": self.side_monotone,
            "side_worst": self.side_worst,
            "surface_monotone": self.surface_monotone,
            "surface_worst": self.surface_worst,
            "self_intersection": self.self_intersection,
            "sample_count": self.sample_count,
        }


@dataclass(frozen=True, eq=False)
class ReconstructedDomain:
    """
    Sampled boundary of the one-wave domain.

    surface_t spans [-pi, pi]; bottom_t likewise; side_u runs from -1 to -r
    (s = |u| from 1 down to r). Bottom and side arrays are empty for r = 0.
    """

    r: float
    mu: float
    B: float
    h: float
    coeffs: np.ndarray = field(repr=False)
    surface_t: np.ndarray = field(repr=False)
    surface_x: np.ndarray = field(repr=False)
    surface_y: np.ndarray = field(repr=False)
    bottom_t: np.ndarray = field(repr=False)
    bottom_x: np.ndarray = field(repr=False)
    side_u: np.ndarray = field(repr=False)
    side_y: np.ndarray = field(repr=False)
    samples: int = 0
    checks: Optional[CorrespondenceReport] = None

    @property
    def series(self) -> _Series:
        return _Series(self.coeffs, self.r)

    def weighted_mean(self) -> float:
        """(1/2pi) int y(t) (-x'(t)) dt, zero for the mean-zero condition."""
        series = self.series
        M = max(4 * self.coeffs.shape[0], 64)
        t = -np.pi + 2.0 * np.pi * np.arange(M) / M
        return float(np.mean(series.y(t) * (-series.dx(t))))


# =============================================================================
# RECONSTRUCTION
# =============================================================================


def reconstruct(sol: WaveSolution, samples: int = 512) -> ReconstructedDomain:
    """
    Sample the four boundary pieces of the flow domain for `sol`.

    ARGS:
        sol: converged solution
        samples: points per boundary piece (>= 64)

    RETURNS:
        ReconstructedDomain with its CorrespondenceReport filled in

    RAISES:
        ValueError: samples < 64
        NonPositiveDepth: h <= 0
    """
    if samples < 64:
        raise ValueError(f"samples must be >= 64, got {samples}")
    series = _Series(sol.coeffs.coeffs, sol.r)
    if sol.r > 0.0 and not series.h > 0.0:
        raise NonPositiveDepth(f"Mean depth h = {series.h} is not positive (B = {series.B})")

    t = np.linspace(-np.pi, np.pi, samples)
    if sol.r > 0.0:
        bottom_t = t.copy()
        bottom_x = series.x_bottom(bottom_t)
        side_u = np.linspace(-1.0, -sol.r, samples)
        side_y = series.y_side(-side_u)
    else:
        bottom_t = bottom_x = side_u = side_y = np.empty(0)

    dom = ReconstructedDomain(
        r=sol.r,
        mu=sol.mu,
        B=series.B,
        h=float(series.h),
        coeffs=np.array(sol.coeffs.coeffs),
        surface_t=t,
        surface_x=series.x(t),
        surface_y=series.y(t),
        bottom_t=bottom_t,
        bottom_x=bottom_x,
        side_u=side_u,
        side_y=side_y,
        samples=samples,
    )
    return replace(dom, checks=check_correspondence(dom))


def _decreasing(values: np.ndarray, derivative: np.ndarray):
    worst = max(0.0, float(np.max(derivative)))
    ordered = bool(np.all(np.diff(values) < 0.0))
    return ordered and worst <= DERIVATIVE_TOL, worst


def check_correspondence(dom: ReconstructedDomain, oversample: int = CHECK_OVERSAMPLE) -> CorrespondenceReport:
    """
    Monotonicity of x_h on [0, pi], of the side y(s) on [r, 1] and of x(t)
    on [0, pi]; evenness covers the other halves. Violations are reported,
    never raised.
    """
    series = dom.series
    M = max(dom.samples, 64) * oversample
    t = np.linspace(0.0, np.pi, M)

    surface_monotone, surface_worst = _decreasing(series.x(t), series.dx(t))

    if dom.r > 0.0:
        bottom_monotone, bottom_worst = _decreasing(series.x_bottom(t), series.dx_bottom(t))
        s = np.linspace(dom.r, 1.0, M)
        y_side = series.y_side(s)
        slope = series.dy_side(s)
        side_worst = max(0.0, float(-np.min(slope)))
        side_monotone = bool(np.all(np.diff(y_side) > 0.0)) and side_worst <= DERIVATIVE_TOL
    else:
        bottom_monotone, bottom_worst = True, 0.0
        side_monotone, side_worst = True, 0.0

    line = LineString(np.column_stack((dom.surface_x, dom.surface_y)))
    return CorrespondenceReport(
        bottom_monotone=bottom_monotone,
        bottom_worst=bottom_worst,
        side_monotone=side_monotone,
        side_worst=side_worst,
        surface_monotone=surface_monotone,
        surface_worst=surface_worst,
        self_intersection=not line.is_simple,
        sample_count=M,
    )


def boundary_gaps(dom: ReconstructedDomain) -> Dict[str, float]:
    """Distances between the endpoints that must meet for a closed boundary."""
    if dom.r == 0.0:
        return {"surface_side": 0.0, "side_bottom": 0.0, "surface_end": 0.0, "bottom_end": 0.0}
    surface_end = abs(dom.surface_x[-1] + np.pi)
    surface_side = abs(dom.surface_y[-1] - dom.side_y[0])
    side_bottom = abs(dom.side_y[-1] + dom.h)
    bottom_end = abs(dom.bottom_x[-1] + np.pi)
    return {
        "surface_side": float(surface_side),
        "side_bottom": float(side_bottom),
        "surface_end": float(surface_end),
        "bottom_end": float(bottom_end),
    }


# =============================================================================
# ELEVATION
# =============================================================================


@dataclass(frozen=True, eq=False)
class ElevationProfile:
    """eta(x) sampled on a uniform x grid over [-pi, pi]."""

    x: np.ndarray
    eta: np.ndarray
    interpolant: PchipInterpolator = field(repr=False)

    def __call__(self, x):
        return self.interpolant(np.clip(x, -np.pi, np.pi))

    def mean(self) -> float:
        return float(trapezoid(self.eta, self.x) / (2.0 * np.pi))


def surface_elevation(dom: ReconstructedDomain, points: Optional[int] = None) -> ElevationProfile:
    """
    Invert the decreasing map t -> x(t) and return eta(x) = y(t(x)).

    RAISES:
        InvertibilityFailed: x(t) is not monotone (overhanging profile)
    """
    checks = dom.checks or check_correspondence(dom)
    if not checks.surface_monotone:
        raise InvertibilityFailed(
            f"Surface x(t) is not monotone (worst slope {checks.surface_worst:.3e})"
        )
    x = dom.surface_x[::-1]
    y = dom.surface_y[::-1]
    if not np.all(np.diff(x) > 0.0):
        raise InvertibilityFailed("Sampled surface x(t) is not strictly ordered")
    interpolant = PchipInterpolator(x, y)
    grid = np.linspace(-np.pi, np.pi, points or dom.samples)
    return ElevationProfile(x=grid, eta=interpolant(np.clip(grid, x[0], x[-1])), interpolant=interpolant)


# =============================================================================
# CRESTS
# =============================================================================


@dataclass(frozen=True)
class CrestAngle:
    """Included crest angle in degrees plus the extrapolated descent slopes."""

    degrees: float
    slopes: tuple
    confident: bool

    def __float__(self) -> float:
        return self.degrees


@dataclass(frozen=True)
class Crest:
    t: float
    x: float
    y: float
    angle: CrestAngle


def richardson_slope(s1: float, s2: float, s4: float) -> float:
    """Slope at offset 0 from slopes at d, 2d, 4d (kills the d and d^2 terms)."""
    return (8.0 * s1 - 6.0 * s2 + s4) / 3.0


def _angle_at(series: _Series, t_c: float, delta: float) -> CrestAngle:
    x_c = series.x(np.array([t_c]))[0]
    y_c = series.y(np.array([t_c]))[0]
    slopes = []
    confident = True
    for side in (1.0, -1.0):
        offsets = t_c + side * delta * np.array([1.0, 2.0, 4.0])
        dx = np.abs(series.x(offsets) - x_c)
        descent = (y_c - series.y(offsets)) / dx
        s0 = richardson_slope(*descent)
        if abs(s0 - descent[0]) > 0.05 + 0.2 * abs(s0):
            confident = False
        slopes.append(float(s0))
    degrees = 180.0 - float(np.degrees(np.arctan(slopes[0]) + np.arctan(slopes[1])))
    return CrestAngle(degrees=degrees, slopes=tuple(slopes), confident=confident)


def _default_delta(n_modes: int) -> float:
    return min(4.0 * np.pi / n_modes, np.pi / 64.0)


def _half_period_samples(series: _Series, oversample: int = 4):
    """t in [0, pi] (padded midpoint nodes plus both ends) and y(t)."""
    N = series.b.shape[0]
    M = N * oversample
    nodes = np.pi * (2.0 * np.arange(1, M + 1) - 1.0) / (2.0 * M)
    t = np.concatenate(([0.0], nodes, [np.pi]))
    inner = to_values(pad_coeffs(series.y_coef, M))
    ends = series.y(np.array([0.0, np.pi]))
    return t, np.concatenate(([ends[0]], inner, [ends[1]]))


def _crest_angle_from_series(series: _Series, crest_t: Optional[float], delta: Optional[float]) -> CrestAngle:
    if crest_t is None:
        t, y = _half_period_samples(series)
        crest_t = float(t[int(np.argmax(y))])
    return _angle_at(series, crest_t, delta or _default_delta(series.b.shape[0]))


def crest_angle(
    dom: ReconstructedDomain, crest_t: Optional[float] = None, delta: Optional[float] = None
) -> CrestAngle:
    """
    Included angle at the crest (highest point unless crest_t is given).

    About 180 degrees for smooth crests, 120 for the extreme wave.
    """
    return _crest_angle_from_series(dom.series, crest_t, delta)


def solution_crest_angle(sol: WaveSolution, crest_t: Optional[float] = None) -> CrestAngle:
    """crest_angle without sampling the full domain (used during tracing)."""
    return _crest_angle_from_series(_Series(sol.coeffs.coeffs, sol.r), crest_t, None)


def find_crests(dom: ReconstructedDomain) -> List[Crest]:
    """Local maxima of y on t in [0, pi]; crests at -t follow by evenness."""
    series = dom.series
    t, y = _half_period_samples(series)
    # Reflect about t = 0 and t = pi so end crests are interior peaks
    extended = np.concatenate((y[:0:-1], y, y[-2::-1]))
    offset = y.shape[0] - 1
    spread = float(np.ptp(y))
    peaks, _ = find_peaks(extended, prominence=max(spread * 1e-6, 1e-14))
    crests = []
    seen = set()
    for p in peaks:
        i = p - offset
        if not 0 <= i < y.shape[0] or i in seen:
            continue
        seen.add(i)
        t_c = float(t[i])
        angle = _angle_at(series, t_c, _default_delta(series.b.shape[0]))
        crests.append(Crest(t=t_c, x=float(series.x(np.array([t_c]))[0]), y=float(y[i]), angle=angle))
    return sorted(crests, key=lambda c: c.t)


# =============================================================================
# SUMMARY
# =============================================================================


def coefficient_tail(b: np.ndarray) -> Dict[str, float]:
    """
    Tail ratio |b_{N-1}| / max|b_k|, the largest last-decade coefficient
    relative to the peak (tail_max) and the last-decade decay ratio.
    """
    mags = np.abs(np.asarray(b, dtype=float)[1:])
    peak = float(np.max(mags)) if mags.size else 0.0
    if peak == 0.0:
        return {"tail_ratio": 0.0, "tail_max": 0.0, "decade_ratio": 0.0}
    decade = max(1, mags.size // 10)
    last = float(np.max(mags[-decade:]))
    before = float(np.max(mags[-2 * decade : -decade])) if mags.size >= 2 * decade else peak
    return {
        "tail_ratio": float(mags[-1] / peak),
        "tail_max": last / peak,
        "decade_ratio": float(last / before) if before > 0 else 0.0,
    }


def wave_summary(sol: WaveSolution, dom: Optional[ReconstructedDomain] = None) -> Dict[str, Any]:
    """Physical characteristics reported next to every reconstruction."""
    dom = dom or reconstruct(sol)
    series = dom.series
    t, y = _half_period_samples(series)
    angle = crest_angle(dom)
    crest = float(np.max(y))
    trough = float(np.min(y))
    summary = {
        "mu": sol.mu,
        "r": sol.r,
        "N": sol.n_modes,
        "B": dom.B,
        "minus_b0": -float(sol.coeffs.coeffs[0]),
        "h": dom.h,
        "crest": crest,
        "trough": trough,
        "crest_to_trough": crest - trough,
        "vinf": sol.amplitude,
        "vinf_sampled": float(np.max(np.abs(y))),
        "crest_angle": angle.degrees,
        "crest_angle_confident": angle.confident,
        "bound_margin": 0.5 * sol.mu - crest,
        "crests": [{"t": c.t, "x": c.x, "y": c.y, "angle": c.angle.degrees} for c in find_crests(dom)],
    }
    summary.update(coefficient_tail(sol.coeffs.coeffs))
    if dom.checks is not None:
        summary["checks"] = dom.checks.to_dict()
    return summary

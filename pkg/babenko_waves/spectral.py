"""
================================================================================
babenko_waves/spectral.py - Operator Algebra on Even 2pi-Periodic Functions
================================================================================

PURPOSE:
    Cosine collocation grid, the fixed value <-> coefficient transform pair,
    and the Fourier multiplier operators B_r, J_r = B_r d/dt and L_r used
    by the Babenko residual.

TRANSFORM CONVENTION (fixed once, used everywhere):
    f(x) = sum_{m=0}^{N-1} c_m cos(m x)

    Nodes are the N midpoints x_k = pi (2k - 1) / (2N), k = 1..N.
    Forward:  y = DCT-II(f);  c_0 = y_0 / (2N),  c_m = y_m / N
    Inverse:  f = DCT-III(c') with c'_0 = c_0 and c'_m = c_m / 2

MULTIPLIERS:
    beta_n   = (1 + r^{2n}) / (1 - r^{2n}) = coth(-n ln r),  beta_0 = 0
    lambda_n = n beta_n                                     (J_r on cos nt)
    mu_n     = 1 / lambda_n,  mu_0 = 1                      (L_r on cos nt)

    1 - r^{2n} is evaluated as -expm1(2n ln r) so r close to 1 keeps its
    digits. r = 0 gives the deep-water Hilbert-transform values.

CONCURRENCY:
    Everything here is a pure function of immutable inputs. Arrays handed
    out by SpectralGrid and CosineSeries are read-only.
================================================================================
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

# =============================================================================
# GRID AND PARAMETERS
# =============================================================================


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SpectralGrid:
    """N cosine modes / N collocation midpoints on (0, pi)."""

    N: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.N, bool) or not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError(f"Grid size must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        k = np.arange(1, self.N + 1, dtype=float)
        object.__setattr__(self, "nodes", _readonly(np.pi * (2.0 * k - 1.0) / (2.0 * self.N)))

    def padded(self, factor: int = 2) -> "SpectralGrid":
        """Grid with factor * N nodes, used for de-aliased products."""
        if factor < 1:
            raise ValueError(f"Padding factor must be >= 1, got {factor}")
        return SpectralGrid(self.N * factor)


@dataclass(frozen=True)
class OperatorParams:
    """Conformal annulus inner radius r; r = 0 is infinite depth."""

    r: float

    def __post_init__(self):
        r = float(self.r)
        if not np.isfinite(r) or r < 0.0 or r >= 1.0:
            raise ValueError(f"Annulus radius must satisfy 0 <= r < 1, got {self.r!r}")
        object.__setattr__(self, "r", r)

    @property
    def deep(self) -> bool:
        return self.r == 0.0


# =============================================================================
# TRANSFORMS
# =============================================================================


def to_coeffs(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Point values at the midpoint nodes -> cosine coefficients."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    out = sp_fft.dct(values, type=2, axis=axis) / n
    index = [slice(None)] * out.ndim
    index[axis] = 0
    out[tuple(index)] *= 0.5
    return out


def to_values(coeffs: np.ndarray, axis: int = 0) -> np.ndarray:
    """Cosine coefficients -> point values at the midpoint nodes."""
    scaled = np.array(coeffs, dtype=float)
    index = [slice(None)] * scaled.ndim
    index[axis] = slice(1, None)
    scaled[tuple(index)] *= 0.5
    return sp_fft.dct(scaled, type=3, axis=axis)


def pad_coeffs(coeffs: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad (or truncate) a coefficient vector to `size` modes."""
    coeffs = np.asarray(coeffs, dtype=float)
    out = np.zeros(size)
    keep = min(size, coeffs.shape[0])
    out[:keep] = coeffs[:keep]
    return out


def synthesis_matrix(grid: SpectralGrid, n_modes: Optional[int] = None) -> np.ndarray:
    """Dense cos(m x_k) matrix, shape (grid.N, n_modes)."""
    n_modes = grid.N if n_modes is None else n_modes
    return np.cos(np.outer(grid.nodes, np.arange(n_modes)))


# =============================================================================
# MULTIPLIERS
# =============================================================================


def _check_radius(r: float) -> float:
    return OperatorParams(r).r


def _check_index(n: int) -> int:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
        raise ValueError(f"Mode index must be a nonnegative integer, got {n!r}")
    return int(n)


def betas(N: int, r: float) -> np.ndarray:
    """Vector of beta_0..beta_{N-1}."""
    r = _check_radius(r)
    out = np.zeros(N)
    if N <= 1:
        return out
    if r == 0.0:
        out[1:] = 1.0
        return out
    exponent = 2.0 * np.arange(1, N) * np.log(r)
    out[1:] = -(1.0 + np.exp(exponent)) / np.expm1(exponent)
    return out


def lambdas(N: int, r: float) -> np.ndarray:
    """Vector of lambda_0..lambda_{N-1} (J_r eigenvalues)."""
    return np.arange(N) * betas(N, r)


def mus(N: int, r: float) -> np.ndarray:
    """Vector of L_r multipliers with the mu_0 = 1 convention."""
    lam = lambdas(N, r)
    out = np.ones(N)
    out[1:] = 1.0 / lam[1:]
    return out


def multiplier_beta(n: int, r: float) -> float:
    """B_r multiplier: cos nt -> beta_n sin nt."""
    n = _check_index(n)
    return float(betas(n + 1, r)[n])


def eigenvalue_lambda(n: int, r: float) -> float:
    """Eigenvalue of J_r on cos nt."""
    n = _check_index(n)
    return n * multiplier_beta(n, r)


def multiplier_mu(n: int, r: float) -> float:
    """mu_n = 1 / lambda_n for n >= 1, 1 for n = 0."""
    n = _check_index(n)
    if n == 0:
        _check_radius(r)
        return 1.0
    return 1.0 / eigenvalue_lambda(n, r)


# =============================================================================
# COSINE SERIES
# =============================================================================


@dataclass(frozen=True, eq=False)
class CosineSeries:
    """Coefficients c_0..c_{N-1} of an even function sum c_m cos(m t)."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _readonly(self.coeffs)
        if coeffs.ndim != 1 or coeffs.shape[0] < 1:
            raise ValueError(f"CosineSeries needs a non-empty 1-D coefficient array, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, N: int) -> "CosineSeries":
        return cls(np.zeros(N))

    @classmethod
    def mode(cls, n: int, N: int, amplitude: float = 1.0) -> "CosineSeries":
        if not 0 <= n < N:
            raise ValueError(f"Mode {n} is not representable with N = {N}")
        c = np.zeros(N)
        c[n] = amplitude
        return cls(c)

    @classmethod
    def from_values(cls, grid: SpectralGrid, values: np.ndarray) -> "CosineSeries":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.N,):
            raise ValueError(f"Expected {grid.N} node values, got shape {values.shape}")
        return cls(to_coeffs(values))

    def values(self, grid: Optional[SpectralGrid] = None) -> np.ndarray:
        """Point values on `grid` (defaults to the series' own grid)."""
        if grid is None or grid.N == self.N:
            return to_values(self.coeffs)
        return to_values(pad_coeffs(self.coeffs, grid.N))

    def padded(self, M: int) -> "CosineSeries":
        if M < self.N:
            raise ValueError(f"Cannot pad {self.N} modes down to {M}")
        return CosineSeries(pad_coeffs(self.coeffs, M))

    def truncated(self, M: int) -> "CosineSeries":
        if M > self.N:
            raise ValueError(f"Cannot truncate {self.N} modes up to {M}")
        return CosineSeries(self.coeffs[:M])

    def norm_inf(self, oversample: int = 4) -> float:
        """Max |f| sampled on an oversampled midpoint grid."""
        return float(np.max(np.abs(self.values(SpectralGrid(self.N * oversample)))))

    def __neg__(self) -> "CosineSeries":
        return CosineSeries(-self.coeffs)


# =============================================================================
# OPERATORS
# =============================================================================


def _check_size(v: CosineSeries, grid: Optional[SpectralGrid]) -> None:
    if grid is not None and grid.N != v.N:
        raise ValueError(f"Size mismatch: series has {v.N} modes, grid has {grid.N}")


def apply_Jr(
    v: CosineSeries, params: OperatorParams, grid: Optional[SpectralGrid] = None
) -> CosineSeries:
    """J_r = B_r d/dt, diagonal with lambda_n on cos nt."""
    _check_size(v, grid)
    return CosineSeries(lambdas(v.N, params.r) * v.coeffs)


def apply_Lr(
    v: CosineSeries, params: OperatorParams, grid: Optional[SpectralGrid] = None
) -> CosineSeries:
    """L_r = sum mu_n P_n with mu_0 = 1."""
    _check_size(v, grid)
    return CosineSeries(mus(v.N, params.r) * v.coeffs)


def project_P0(v: CosineSeries) -> CosineSeries:
    """Keep only the constant mode."""
    c = np.zeros(v.N)
    c[0] = v.coeffs[0]
    return CosineSeries(c)


def apply_Br_sine(v: CosineSeries, params: OperatorParams) -> np.ndarray:
    """Sine coefficients s_n of B_r v, i.e. (B_r v)(t) = sum s_n sin(n t)."""
    return betas(v.N, params.r) * v.coeffs


def apply_Jr_values(values: np.ndarray, params: OperatorParams) -> np.ndarray:
    """J_r on node values: forward transform, diagonal scaling, inverse transform."""
    values = np.asarray(values, dtype=float)
    return to_values(lambdas(values.shape[0], params.r) * to_coeffs(values))

"""
================================================================================
babenko_waves/babenko_eq.py - Transformed Babenko Equation on Cosine Coefficients
================================================================================

PURPOSE:
    Residual and Jacobian of the discrete, L_r-transformed Babenko equation

        R(mu, w) = L_r w - mu (I - P0) w + L_r (w J_r w) + 1/2 (I - P0) w^2

    plus the small-amplitude seed (mu_n, s cos nt) every primary branch
    starts from.

HOW IT WORKS:
    The unknown is the coefficient vector c of w. Products w * J_r w and
    w^2 are taken pointwise at the collocation nodes and transformed back.
    With de-aliasing ON the products are formed on a 2N node grid and the
    result truncated to N modes, which makes every quadratic product exact.

    The Jacobian is assembled densely in coefficient space:

        dR/dc = diag(mu_n) - mu (I - P0)
                + diag(mu_n) T [diag(J_r w) S + diag(w) S Lambda]
                + (I - P0) T diag(w) S

    where S is the cos(m x_k) synthesis matrix and T the forward transform.
    dR/dmu = -(I - P0) c.

TUNABLE:
    - DEFAULT_N: modes used for branch tracing when nothing else is given
    - EXTREME_N: default cap for the resolution doubling of a trace
================================================================================
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from babenko_waves.spectral import (
    CosineSeries,
    OperatorParams,
    SpectralGrid,
    lambdas,
    multiplier_mu,
    mus,
    pad_coeffs,
    synthesis_matrix,
    to_coeffs,
    to_values,
)
from babenko_waves.telemetry import emit_event

# TUNABLE: default resolution for branch tracing
DEFAULT_N = 256

# TUNABLE: finest grid a trace refines to by default (near-extreme waves)
EXTREME_N = 1024

# Largest |s| for which asymptotic_seed is trusted without a warning
SEED_LIMIT = 0.1


# =============================================================================
# SOLUTION RECORD
# =============================================================================


@dataclass(frozen=True, eq=False)
class WaveSolution:
    """
    One point (mu, w) of a solution branch.

    `values` are w at the collocation nodes; `amplitude` is max_k |w(x_k)|.
    """

    mu: float
    r: float
    coeffs: CosineSeries
    values: np.ndarray = field(repr=False)
    amplitude: float
    dealias: bool = False
    iterations: int = 0
    residual_norm: float = 0.0

    @classmethod
    def build(
        cls,
        mu: float,
        r: float,
        coeffs: CosineSeries,
        dealias: bool = False,
        iterations: int = 0,
        residual_norm: float = 0.0,
    ) -> "WaveSolution":
        values = to_values(coeffs.coeffs)
        values.setflags(write=False)
        amplitude = float(np.max(np.abs(values)))
        return cls(
            mu=float(mu),
            r=float(r),
            coeffs=coeffs,
            values=values,
            amplitude=amplitude,
            dealias=bool(dealias),
            iterations=int(iterations),
            residual_norm=float(residual_norm),
        )

    @classmethod
    def zero(cls, mu: float, r: float, N: int, dealias: bool = False) -> "WaveSolution":
        return cls.build(mu, r, CosineSeries.zeros(N), dealias=dealias)

    @property
    def n_modes(self) -> int:
        return self.coeffs.N

    @property
    def params(self) -> OperatorParams:
        return OperatorParams(self.r)

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.n_modes)

    def peak_elevation(self, oversample: int = 4) -> float:
        """max over t of w(t), including the symmetry points t = 0 and t = pi."""
        c = self.coeffs.coeffs
        signs = np.where(np.arange(c.shape[0]) % 2 == 0, 1.0, -1.0)
        sampled = to_values(pad_coeffs(c, c.shape[0] * oversample))
        return float(max(np.max(sampled), np.sum(c), np.sum(signs * c)))

    def crest_bound_margin(self) -> float:
        """mu/2 - max eta; non-negative for admissible waves."""
        return 0.5 * self.mu - self.peak_elevation()

    def with_padding(self, M: int) -> "WaveSolution":
        """Same function on M >= N modes (node values recomputed)."""
        return WaveSolution.build(
            self.mu,
            self.r,
            self.coeffs.padded(M),
            dealias=self.dealias,
            iterations=self.iterations,
            residual_norm=self.residual_norm,
        )


# =============================================================================
# SOLVER CONTEXT
# =============================================================================


class BabenkoSystem:
    """
    Cached multipliers and matrices for one (N, r, dealias) combination.

    Single-threaded per branch trace; independent traces build their own.
    """

    def __init__(self, grid: SpectralGrid, params: OperatorParams, dealias: bool = False):
        self.grid = grid
        self.params = params
        self.dealias = bool(dealias)
        self.N = grid.N
        self.quad_grid = grid.padded(2) if self.dealias else grid
        self.lam = lambdas(self.N, params.r)
        self.mu_vec = mus(self.N, params.r)

    @cached_property
    def synthesis(self) -> np.ndarray:
        """cos(m x_k) on the product grid, shape (M, N)."""
        return synthesis_matrix(self.quad_grid, self.N)

    # -- plumbing -----------------------------------------------------------

    def _check(self, coeffs) -> np.ndarray:
        c = coeffs.coeffs if isinstance(coeffs, CosineSeries) else np.asarray(coeffs, dtype=float)
        if c.shape != (self.N,):
            raise ValueError(f"Size mismatch: expected {self.N} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("Non-finite coefficients passed to the Babenko residual")
        return c

    def _values(self, c: np.ndarray) -> np.ndarray:
        if self.dealias:
            return to_values(pad_coeffs(c, self.quad_grid.N))
        return to_values(c)

    def _coeffs(self, values: np.ndarray) -> np.ndarray:
        return to_coeffs(values, axis=0)[: self.N]

    # -- equation -----------------------------------------------------------

    def residual(self, mu: float, coeffs) -> np.ndarray:
        """R(mu, c) as a coefficient vector."""
        if not np.isfinite(mu):
            raise ValueError(f"Non-finite mu: {mu}")
        c = self._check(coeffs)
        w = self._values(c)
        jw = self._values(self.lam * c)
        prod = self._coeffs(w * jw)
        square = self._coeffs(w * w)

        out = self.mu_vec * (c + prod)
        out[1:] += 0.5 * square[1:] - mu * c[1:]
        return out

    def residual_unscaled(self, mu: float, coeffs) -> np.ndarray:
        """mu J_r w - w - w J_r w - 1/2 J_r(w^2), before multiplying through by L_r."""
        c = self._check(coeffs)
        w = self._values(c)
        jw = self._values(self.lam * c)
        prod = self._coeffs(w * jw)
        square = self._coeffs(w * w)
        return mu * self.lam * c - c - prod - 0.5 * self.lam * square

    def jacobian(self, mu: float, coeffs) -> np.ndarray:
        """Frechet derivative dR/dc as a dense N x N matrix."""
        c = self._check(coeffs)
        S = self.synthesis
        w = self._values(c)
        jw = self._values(self.lam * c)

        inner = jw[:, None] * S + w[:, None] * (S * self.lam[None, :])
        J = self.mu_vec[:, None] * self._coeffs(inner)

        square_part = self._coeffs(w[:, None] * S)
        square_part[0, :] = 0.0
        J += square_part

        diag = np.arange(self.N)
        J[diag, diag] += self.mu_vec
        J[diag[1:], diag[1:]] -= mu
        return J

    def mu_derivative(self, coeffs) -> np.ndarray:
        """dR/dmu = -(I - P0) c."""
        c = self._check(coeffs)
        out = -c.copy()
        out[0] = 0.0
        return out


# =============================================================================
# MODULE-LEVEL OPERATIONS
# =============================================================================


def residual(
    mu: float, w: CosineSeries, params: OperatorParams, dealias: bool = False
) -> CosineSeries:
    """Residual of the discrete transformed Babenko equation."""
    return CosineSeries(BabenkoSystem(SpectralGrid(w.N), params, dealias).residual(mu, w))


def jacobian(
    mu: float, w: CosineSeries, params: OperatorParams, dealias: bool = False
) -> np.ndarray:
    """Dense N x N Jacobian in coefficient space."""
    return BabenkoSystem(SpectralGrid(w.N), params, dealias).jacobian(mu, w)


def asymptotic_seed(
    n: int, s: float, params: OperatorParams, grid: Optional[SpectralGrid] = None
) -> Tuple[float, CosineSeries]:
    """
    Small-amplitude start (mu_n, s cos nt) for the primary branch C_n.

    ARGS:
        n: mode index, 1 <= n < N
        s: signed amplitude; |s| <= SEED_LIMIT is the trusted range
        params: annulus radius
        grid: collocation grid (DEFAULT_N modes if omitted)

    RETURNS:
        (mu_n(r), s cos nt)
    """
    grid = grid or SpectralGrid(DEFAULT_N)
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"Mode index must be a positive integer, got {n!r}")
    if n >= grid.N:
        raise ValueError(f"Mode {n} is not representable with N = {grid.N}")
    if abs(s) > SEED_LIMIT:
        emit_event(
            "seed_warning",
            f"Seed amplitude {s} exceeds {SEED_LIMIT}; asymptotics may be poor",
            level="warn",
            stage="seed",
        )
    return multiplier_mu(int(n), params.r), CosineSeries.mode(int(n), grid.N, float(s))

"""
================================================================================
babenko_waves/bifurcation.py - Primary Points, Secondary Detection, Branch Switching
================================================================================

PURPOSE:
    - primary_points: mu_n(r) = (1 - r^{2n}) / (n (1 + r^{2n})), the values
      at which C_n leaves the zero solution
    - detect_secondary: sign monitoring of det(dR/dc) along a traced branch,
      bisection in amplitude and kernel extraction at each crossing that a
      fold does not explain
    - switch_branch: perturb the host along the kernel in both signs and
      trace each new (period-multiplied) side

HOW IT WORKS:
    The mu-fixed Jacobian dR/dc is singular both at folds and at branch
    points. The augmented (mu, c) matrix stays regular at folds but not at
    branch points, so a crossing counts as secondary only when the augmented
    determinant changes sign. Its amplitude row is held at one node for the
    whole branch so that the sign cannot jump with the max node.

    Determinant signs come from the LU factors: product of the diagonal
    signs times (-1)^(number of row interchanges).

TUNABLE:
    - BISECT_TOL: amplitude bracket width at which bisection stops
    - SWITCH_EPS: perturbation sizes tried by switch_branch, relative to
      the host amplitude
    - DEPART_FRACTION: share of the perturbation that must survive
      re-convergence for a switch to count as leaving the host
================================================================================
"""

import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, svd

from babenko_waves.babenko_eq import BabenkoSystem, WaveSolution
from babenko_waves.continuation import ContinuationConfig, interpolate_guess, newton_solve, trace_from
from babenko_waves.errors import FallbackToHost, NoConvergence, SingularJacobian
from babenko_waves.models import BifurcationPoint, Branch, BranchEvent, EventKind, PointKind
from babenko_waves.spectral import (
    CosineSeries,
    OperatorParams,
    SpectralGrid,
    multiplier_mu,
    synthesis_matrix,
    to_values,
)
from babenko_waves.telemetry import emit_event

# TUNABLE: bisection stops once the amplitude bracket is this narrow
BISECT_TOL = 1e-8

# TUNABLE: perturbation sizes (fractions of the host amplitude)
SWITCH_EPS = (1e-3, 1e-2, 1e-1)

# TUNABLE: departure threshold for switch_branch
DEPART_FRACTION = 0.1

_MAX_BISECTIONS = 80

__all__ = [
    "BifurcationPoint",
    "PointKind",
    "SwitchedBranch",
    "annotate_secondary",
    "augmented_matrix",
    "detect_secondary",
    "determinant_sign",
    "harmonic_energy_outside",
    "primary_points",
    "switch_branch",
]


# =============================================================================
# PRIMARY POINTS
# =============================================================================


def primary_points(
    params: OperatorParams, n_max: int, n_modes: Optional[int] = None
) -> List[BifurcationPoint]:
    """
    mu_n(r) for n = 1..n_max, strictly decreasing in n.

    With n_modes given, each point carries its null direction cos nt.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    points = []
    for n in range(1, n_max + 1):
        null = None
        if n_modes is not None and n < n_modes:
            null = CosineSeries.mode(n, n_modes)
        points.append(
            BifurcationPoint(
                mu_star=multiplier_mu(n, params.r),
                kind=PointKind.PRIMARY,
                mode=n,
                r=params.r,
                null_direction=null,
            )
        )
    return points


# =============================================================================
# DETERMINANT SIGNS
# =============================================================================


def determinant_sign(matrix: np.ndarray) -> int:
    """Sign of det(matrix) from its LU factors; 0 for an exactly singular U."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(np.asarray(matrix, dtype=float), check_finite=False)
    diag = np.diag(lu)
    if np.any(diag == 0.0):
        return 0
    swaps = int(np.count_nonzero(piv != np.arange(piv.shape[0])))
    negatives = int(np.count_nonzero(diag < 0.0))
    return -1 if (swaps + negatives) % 2 else 1


def augmented_matrix(system: BabenkoSystem, sol: WaveSolution, node: Optional[int] = None) -> np.ndarray:
    """
    Newton matrix of the (mu, c) system with an amplitude row.

    The row differentiates |w| at `node`, or at the max node of `sol` when
    node is None.
    """
    N = system.N
    S = synthesis_matrix(system.grid)
    w = S @ sol.coeffs.coeffs
    k = int(np.argmax(np.abs(w))) if node is None else int(node)
    A = np.zeros((N + 1, N + 1))
    A[:N, 0] = system.mu_derivative(sol.coeffs)
    A[:N, 1:] = system.jacobian(sol.mu, sol.coeffs)
    A[N, 1:] = (1.0 if w[k] >= 0 else -1.0) * S[k]
    return A


# =============================================================================
# SECONDARY DETECTION
# =============================================================================


def _kernel(system: BabenkoSystem, sol: WaveSolution):
    """Right singular vector of the smallest singular value, and that value."""
    _, sigma, vt = svd(system.jacobian(sol.mu, sol.coeffs))
    return vt[-1], float(sigma[-1])


def _bisect(
    branch: Branch,
    index: int,
    sign_of: Callable[[WaveSolution], int],
    system: BabenkoSystem,
    config: ContinuationConfig,
) -> Optional[BifurcationPoint]:
    params = branch.params
    lo = branch.points[index]
    hi = branch.points[index + 1]
    s_lo = sign_of(lo)

    for _ in range(_MAX_BISECTIONS):
        if abs(hi.amplitude - lo.amplitude) <= BISECT_TOL:
            break
        a_mid = 0.5 * (lo.amplitude + hi.amplitude)
        try:
            mid = newton_solve(interpolate_guess(lo, hi, a_mid), a_mid, config, params)
        except (NoConvergence, SingularJacobian) as exc:
            emit_event(
                "bisection_inconclusive",
                f"Bisection between points {index} and {index + 1} stopped at "
                f"|da|={abs(hi.amplitude - lo.amplitude):.3e}: {exc}",
                level="warn",
                stage="detect",
                data={"index": index, "a_lo": lo.amplitude, "a_hi": hi.amplitude},
            )
            return None
        s_mid = sign_of(mid)
        if s_mid == 0:
            lo = hi = mid
            break
        if s_mid == s_lo:
            lo = mid
        else:
            hi = mid
    else:
        emit_event(
            "bisection_inconclusive",
            f"Bisection between points {index} and {index + 1} hit the iteration cap",
            level="warn",
            stage="detect",
            data={"index": index},
        )
        return None

    k_lo, sigma_lo = _kernel(system, lo)
    k_hi, sigma_hi = _kernel(system, hi)
    host, kernel, sigma = (lo, k_lo, sigma_lo) if sigma_lo <= sigma_hi else (hi, k_hi, sigma_hi)

    values = to_values(kernel)
    kernel = kernel / np.max(np.abs(values))
    crest_node = int(np.argmax(np.abs(host.values)))
    if to_values(kernel)[crest_node] < 0:
        kernel = -kernel

    left = branch.points[index]
    right = branch.points[index + 1]
    da = right.amplitude - left.amplitude
    tangent = (right.coeffs.coeffs - left.coeffs.coeffs) / da if da != 0.0 else np.zeros(system.N)

    return BifurcationPoint(
        mu_star=host.mu,
        kind=PointKind.SECONDARY,
        mode=int(np.argmax(np.abs(kernel))),
        r=params.r,
        amplitude=host.amplitude,
        host_index=index,
        null_direction=CosineSeries(kernel),
        host_solution=host,
        host_tangent=CosineSeries(tangent),
        kernel_residual=sigma,
    )


def detect_secondary(
    branch: Branch, config: Optional[ContinuationConfig] = None
) -> List[BifurcationPoint]:
    """
    Secondary bifurcation points along `branch`.

    det(dR/dc) changes sign at folds and at branch points alike. The
    augmented determinant with the amplitude row held at the crest node of
    the first nonzero point is regular at folds, so its sign changes mark
    exactly the crossings a fold does not explain, including a branch point
    and a fold that fall between the same two points.

    ARGS:
        branch: traced branch with at least two points
        config: Newton settings for the bisection solves (defaults match
                the branch's de-aliasing and grid)

    RETURNS:
        Points in branch order; inconclusive brackets are warned about and
        skipped
    """
    if len(branch) < 2:
        raise ValueError("detect_secondary needs a branch with at least 2 points")
    dealias = branch.points[0].dealias
    config = config or ContinuationConfig(dealias=dealias, max_modes=branch.n_modes)
    system = BabenkoSystem(SpectralGrid(branch.n_modes), branch.params, dealias)

    reference = next((p for p in branch.points if p.amplitude > 0.0), branch.points[-1])
    node = int(np.argmax(np.abs(reference.values)))

    def augmented_sign(sol: WaveSolution) -> int:
        return determinant_sign(augmented_matrix(system, sol, node))

    j_signs = [determinant_sign(system.jacobian(p.mu, p.coeffs)) for p in branch.points]
    a_signs = [augmented_sign(p) for p in branch.points]

    found = []
    for i in range(len(branch) - 1):
        if a_signs[i] * a_signs[i + 1] >= 0:
            if j_signs[i] * j_signs[i + 1] < 0:
                emit_event(
                    "fold",
                    f"det(dR/dc) changes sign between points {i} and {i + 1} at a fold",
                    stage="detect",
                    data={"index": i, "mu": branch.points[i].mu},
                )
            continue
        point = _bisect(branch, i, augmented_sign, system, config)
        if point is None:
            continue
        found.append(point)
        emit_event(
            "secondary_bifurcation",
            f"Secondary point at mu={point.mu_star:.10g}, a={point.amplitude:.8g}, "
            f"dominant harmonic {point.mode}",
            level="success",
            stage="detect",
            counters_delta={"secondary_points": 1},
            data={"index": i, "mu": point.mu_star, "amplitude": point.amplitude, "mode": point.mode},
        )
    return found


def annotate_secondary(branch: Branch, points: Sequence[BifurcationPoint]) -> Branch:
    """Branch with one secondary_bifurcation event per detected point."""
    events = [
        BranchEvent(
            index=int(p.host_index),
            kind=EventKind.SECONDARY_BIFURCATION,
            mu=p.mu_star,
            amplitude=p.amplitude,
            detail=p.to_dict(),
        )
        for p in points
    ]
    return branch.with_events(events)


# =============================================================================
# BRANCH SWITCHING
# =============================================================================


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


@dataclass(frozen=True, eq=False)
class SwitchedBranch:
    """One side of a secondary branch: perturbation sign and size, and the trace."""

    sign: int
    eps: float
    branch: Branch


def switch_branch(
    point: BifurcationPoint,
    config: ContinuationConfig,
    params: OperatorParams,
    sign: int = 1,
    eps_factors: Sequence[float] = SWITCH_EPS,
) -> List[SwitchedBranch]:
    """
    Leave the host branch along the kernel direction, once per perturbation
    sign, and trace each side that departs.

    ARGS:
        point: secondary point with host solution and null direction
        config: step control for the new traces
        params: annulus radius
        sign: perturbation sign handled first (the opposite sign follows)
        eps_factors: perturbation sizes relative to the host amplitude,
                     tried in order for each sign

    RETURNS:
        One SwitchedBranch per departing sign, `sign` first. Each branch
        starts at the host solution and is traced in the direction the
        amplitude moved when leaving the host.

    RAISES:
        ValueError: point is not a usable secondary point
        FallbackToHost: both signs re-converged onto the host at every size
    """
    if point.kind != PointKind.SECONDARY:
        raise ValueError("switch_branch needs a secondary bifurcation point")
    if point.null_direction is None or point.host_solution is None:
        raise ValueError("Secondary point lacks a null direction or host solution")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")

    host = point.host_solution
    kernel = point.null_direction.coeffs
    if kernel.shape[0] != host.n_modes:
        raise ValueError("Null direction and host solution sizes differ")
    tangent = _unit(point.host_tangent.coeffs) if point.host_tangent is not None else np.zeros_like(kernel)
    k_perp = kernel - (kernel @ tangent) * tangent
    k_norm = np.linalg.norm(k_perp)
    if k_norm == 0.0:
        raise FallbackToHost("Null direction is parallel to the host tangent")
    scale = host.amplitude if host.amplitude > 0 else 1.0
    base = host.coeffs.coeffs

    def depart(s: int):
        for factor in eps_factors:
            eps = s * factor * scale
            guess = base + eps * kernel
            target = float(np.max(np.abs(to_values(guess))))
            emit_event(
                "switch_attempt",
                f"Switching from mu={host.mu:.10g} with eps={eps:.3e}",
                stage="switch",
                data={"eps": eps, "target_amplitude": target},
            )
            try:
                new = newton_solve((host.mu, CosineSeries(guess)), target, config, params)
            except (NoConvergence, SingularJacobian):
                continue
            d = new.coeffs.coeffs - base
            d_perp = d - (d @ tangent) * tangent
            if abs(d_perp @ k_perp) / k_norm >= DEPART_FRACTION * abs(eps) * k_norm:
                return eps, new
        return None

    switched = []
    for s in (sign, -sign):
        left = depart(s)
        if left is None:
            continue
        eps, new = left
        direction = 1 if new.amplitude >= host.amplitude else -1
        emit_event(
            "switch_success",
            f"Left host at eps={eps:.3e}: mu={new.mu:.10g}, a={new.amplitude:.8g}",
            level="success",
            stage="switch",
            data={"eps": eps, "mu": new.mu, "amplitude": new.amplitude, "direction": direction},
        )
        branch = trace_from([host, new], params, config, point, direction=direction)
        switched.append(SwitchedBranch(sign=s, eps=eps, branch=branch))

    if switched:
        return switched
    emit_event(
        "fallback_to_host",
        f"Every perturbation re-converged onto the host at mu={host.mu:.10g}",
        level="warn",
        stage="switch",
    )
    raise FallbackToHost(
        f"Branch switching at mu={point.mu_star:.10g} fell back to the host for both signs "
        f"up to eps={max(eps_factors):g} of the amplitude"
    )


# =============================================================================
# DIAGNOSTICS
# =============================================================================


def harmonic_energy_outside(sol: WaveSolution, period_divisor: int) -> float:
    """
    Share of sum_{k>=1} b_k^2 carried by harmonics k not divisible by
    period_divisor. Zero for a wave with period 2pi / period_divisor.
    """
    if period_divisor < 1:
        raise ValueError(f"period_divisor must be >= 1, got {period_divisor}")
    b = sol.coeffs.coeffs[1:]
    k = np.arange(1, b.shape[0] + 1)
    total = float(np.sum(b * b))
    if total == 0.0:
        return 0.0
    return float(np.sum(b[k % period_divisor != 0] ** 2) / total)

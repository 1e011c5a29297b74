"""
================================================================================
babenko_waves/continuation.py - Newton Solver and Amplitude-Stepped Branch Tracing
================================================================================

PURPOSE:
    Solves the discrete Babenko equation together with the amplitude
    constraint max_k |w(x_k)| = a (N + 1 equations, unknowns mu and c) and
    traces primary branches C_n from the zero solution by stepping a.

HOW IT WORKS:
    newton_solve:
        - constraint row is sign(w_k*) cos(m x_k*) at the node k* attaining
          the max, re-selected every iteration
        - augmented matrix factored with LU; the 1-norm condition estimate
          (LAPACK gecon) above cond_limit raises SingularJacobian
        - converged when ||R||_inf <= newton_tol and the amplitude equation
          holds to amplitude_tol

    trace_branch / trace_from:
        - first point: asymptotic seed converged at a0 = min(step, max_amp);
          C_n steps are the configured ones divided by n
        - predictor: secant in (mu, c) through the last two points
        - Newton failure or a crest above mu/2 (round-off allowance
          crest_bound_tol) halves the step; <= fast_iterations Newton steps
          grow it by step_grow
        - resolution: when the last-decade coefficients of an accepted point
          exceed tail_tol, or a step is refused at the crest bound, every
          point is re-converged on 2N modes (up to max_modes)
        - folds: a sign change of dmu/da brackets the turning point, which
          is then located by a bounded scalar search over Newton solves
        - stops on step underflow, a ~120 degree crest, max_points or
          max_amplitude

TUNABLE:
    - ContinuationConfig fields (see config.yaml for the CLI defaults)
    - EXTREME_UNDERFLOW_DEGREES: a step underflow this close to a 120
      degree crest is reported as the extreme wave
    - FOLD_XTOL: fold search tolerance relative to the bracket width
================================================================================
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve
from scipy.optimize import minimize_scalar

from babenko_waves.babenko_eq import DEFAULT_N, EXTREME_N, BabenkoSystem, WaveSolution, asymptotic_seed
from babenko_waves.errors import BabenkoError, NoConvergence, SingularJacobian
from babenko_waves.models import BifurcationPoint, Branch, BranchEvent, EventKind, PointKind
from babenko_waves.reconstruct import coefficient_tail, solution_crest_angle
from babenko_waves.spectral import CosineSeries, OperatorParams, SpectralGrid, synthesis_matrix
from babenko_waves.telemetry import emit_event

EXTREME_DEGREES = 120.0

# TUNABLE: step underflow within this many degrees of 120 counts as the extreme wave
EXTREME_UNDERFLOW_DEGREES = 5.0

# TUNABLE: fold search stops at this fraction of the bracketing amplitude interval
FOLD_XTOL = 1e-6

Guess = Union[WaveSolution, Tuple[float, CosineSeries]]


# =============================================================================
# CONFIGURATION
# =============================================================================


@dataclass(frozen=True)
class ContinuationConfig:
    """
    Newton, step and resolution settings for one trace.

    max_amplitude = inf means "until the extreme wave". max_modes caps the
    resolution doubling; a value below the starting N disables it.
    """

    newton_tol: float = 1e-10
    max_newton_iters: int = 25
    initial_step: float = 1e-3
    max_step: float = 1e-2
    min_step: float = 1e-7
    step_shrink: float = 0.5
    step_grow: float = 1.2
    max_points: int = 2000
    max_amplitude: float = math.inf
    dealias: bool = False
    amplitude_tol: float = 1e-12
    cond_limit: float = 1e13
    fast_iterations: int = 4
    crest_bound_tol: float = 1e-12
    extreme_angle_tol: float = 0.5
    max_modes: int = EXTREME_N
    tail_tol: float = 1e-10
    strict: bool = False

    def __post_init__(self):
        errors = []
        for name in ("newton_tol", "initial_step", "max_step", "min_step", "amplitude_tol", "cond_limit", "tail_tol"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)}")
        if not self.min_step < self.initial_step <= self.max_step:
            errors.append(
                "step sizes must satisfy min_step < initial_step <= max_step, got "
                f"{self.min_step}, {self.initial_step}, {self.max_step}"
            )
        if not 0.0 < self.step_shrink < 1.0:
            errors.append(f"step_shrink must lie in (0, 1), got {self.step_shrink}")
        if not self.step_grow >= 1.0:
            errors.append(f"step_grow must be >= 1, got {self.step_grow}")
        if self.max_newton_iters < 1:
            errors.append(f"max_newton_iters must be >= 1, got {self.max_newton_iters}")
        if self.max_points < 1:
            errors.append(f"max_points must be >= 1, got {self.max_points}")
        if not self.max_amplitude >= 0:
            errors.append(f"max_amplitude must be >= 0, got {self.max_amplitude}")
        if not 0.0 <= self.crest_bound_tol <= 1e-10:
            errors.append(f"crest_bound_tol is a round-off allowance in [0, 1e-10], got {self.crest_bound_tol}")
        if self.max_modes < 1:
            errors.append(f"max_modes must be >= 1, got {self.max_modes}")
        if errors:
            raise ValueError("ContinuationConfig validation failed:\n  - " + "\n  - ".join(errors))

    def for_mode(self, n: int) -> "ContinuationConfig":
        """Steps divided by n; C_n carries about 1/n of the amplitude of C_1."""
        if n <= 1:
            return self
        return replace(
            self,
            initial_step=self.initial_step / n,
            max_step=self.max_step / n,
            min_step=self.min_step / n,
        )


# =============================================================================
# NEWTON
# =============================================================================


def _unpack(guess: Guess) -> Tuple[float, np.ndarray]:
    if isinstance(guess, WaveSolution):
        return guess.mu, np.array(guess.coeffs.coeffs)
    mu, series = guess
    coeffs = series.coeffs if isinstance(series, CosineSeries) else series
    return float(mu), np.array(coeffs, dtype=float)


def _solve_checked(matrix: np.ndarray, rhs: np.ndarray, cond_limit: float) -> np.ndarray:
    """LU solve that refuses matrices whose condition estimate exceeds cond_limit."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(matrix, check_finite=False)
    anorm = np.linalg.norm(matrix, 1)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    condition = math.inf if rcond <= 0 else 1.0 / rcond
    if info != 0 or not np.isfinite(condition) or condition > cond_limit:
        raise SingularJacobian(
            f"Augmented Newton matrix is singular (condition estimate {condition:.3e})",
            condition=condition,
        )
    return lu_solve((lu, piv), rhs, check_finite=False)


def newton_solve(
    guess: Guess,
    target_amplitude: float,
    config: ContinuationConfig,
    params: OperatorParams,
    pin: Optional[float] = None,
) -> WaveSolution:
    """
    Solve R(mu, c) = 0 with the amplitude equation |w| = a.

    ARGS:
        guess: starting (mu, CosineSeries) or a WaveSolution
        target_amplitude: a >= 0
        config: tolerances and iteration cap
        params: annulus radius
        pin: if given, the amplitude equation is |w(pin)| = a at this fixed
             t instead of at the max node (used by refine)

    RETURNS:
        Converged WaveSolution

    RAISES:
        NoConvergence: iteration cap hit or the iterate blew up
        SingularJacobian: augmented matrix condition estimate above cond_limit
    """
    mu, c = _unpack(guess)
    if not np.isfinite(mu) or not np.all(np.isfinite(c)):
        raise ValueError("Newton guess must be finite")
    if not np.isfinite(target_amplitude) or target_amplitude < 0:
        raise ValueError(f"Target amplitude must be finite and >= 0, got {target_amplitude}")

    N = c.shape[0]
    if target_amplitude == 0.0:
        return WaveSolution.zero(mu, params.r, N, dealias=config.dealias)

    grid = SpectralGrid(N)
    system = BabenkoSystem(grid, params, config.dealias)
    nodes_matrix = synthesis_matrix(grid)
    pin_row = None if pin is None else np.cos(pin * np.arange(N))
    amp_tol = config.amplitude_tol * max(1.0, target_amplitude)

    res_norm = math.inf
    for iteration in range(config.max_newton_iters + 1):
        R = system.residual(mu, c)
        if pin_row is None:
            w = nodes_matrix @ c
            k = int(np.argmax(np.abs(w)))
            row = nodes_matrix[k]
            value = w[k]
        else:
            row = pin_row
            value = float(pin_row @ c)
        sign = 1.0 if value >= 0 else -1.0
        gap = abs(value) - target_amplitude
        res_norm = float(np.max(np.abs(R)))

        if res_norm <= config.newton_tol and abs(gap) <= amp_tol:
            return WaveSolution.build(
                mu,
                params.r,
                CosineSeries(c),
                dealias=config.dealias,
                iterations=iteration,
                residual_norm=res_norm,
            )
        if iteration == config.max_newton_iters:
            break

        A = np.zeros((N + 1, N + 1))
        A[:N, 0] = system.mu_derivative(c)
        A[:N, 1:] = system.jacobian(mu, c)
        A[N, 1:] = sign * row
        rhs = -np.concatenate((R, [gap]))

        try:
            delta = _solve_checked(A, rhs, config.cond_limit)
        except SingularJacobian as exc:
            exc.iterate = (mu, CosineSeries(c))
            raise

        mu += delta[0]
        c = c + delta[1:]
        if not np.isfinite(mu) or not np.all(np.isfinite(c)):
            raise NoConvergence(
                f"Newton iterate became non-finite at iteration {iteration + 1}",
                residual_norm=res_norm,
            )

    raise NoConvergence(
        f"Newton did not converge in {config.max_newton_iters} iterations "
        f"(|R| = {res_norm:.3e}, a = {target_amplitude})",
        iterate=(mu, CosineSeries(c)),
        residual_norm=res_norm,
    )


# =============================================================================
# BRANCH TRACING
# =============================================================================


def _predict(points: Sequence[WaveSolution], a_next: float) -> Tuple[float, CosineSeries]:
    """Secant extrapolation in amplitude; a single point is rescaled."""
    last = points[-1]
    if len(points) == 1:
        scale = a_next / last.amplitude if last.amplitude > 0 else 1.0
        return last.mu, CosineSeries(last.coeffs.coeffs * scale)
    prev = points[-2]
    da = last.amplitude - prev.amplitude
    if da == 0.0:
        return last.mu, last.coeffs
    t = (a_next - last.amplitude) / da
    return (
        last.mu + t * (last.mu - prev.mu),
        CosineSeries(last.coeffs.coeffs + t * (last.coeffs.coeffs - prev.coeffs.coeffs)),
    )


def interpolate_guess(lo: WaveSolution, hi: WaveSolution, a: float) -> Tuple[float, CosineSeries]:
    """Linear interpolation in amplitude between two solutions on the same grid."""
    span = hi.amplitude - lo.amplitude
    t = 0.0 if span == 0.0 else (a - lo.amplitude) / span
    mu = lo.mu + t * (hi.mu - lo.mu)
    c = lo.coeffs.coeffs + t * (hi.coeffs.coeffs - lo.coeffs.coeffs)
    return mu, CosineSeries(c)


def _admissible(sol: WaveSolution, config: ContinuationConfig) -> bool:
    return sol.crest_bound_margin() >= -config.crest_bound_tol


# -- folds ---------------------------------------------------------------------


def _locate_fold(
    bracket: Sequence[WaveSolution], params: OperatorParams, config: ContinuationConfig
) -> Optional[WaveSolution]:
    """
    Extremum of mu(a) inside the amplitude range of three bracketing points.

    Bounded Brent search; every function value is a Newton solve started
    from the bracket. None when any solve fails.
    """
    anchors = sorted(bracket, key=lambda p: p.amplitude)
    lo, mid, hi = anchors
    if not hi.amplitude > lo.amplitude:
        return None
    middle = bracket[1]
    sense = -1.0 if middle.mu >= bracket[0].mu else 1.0
    solved: List[WaveSolution] = []

    def objective(a: float) -> float:
        left, right = (lo, mid) if a <= mid.amplitude else (mid, hi)
        sol = newton_solve(interpolate_guess(left, right, a), a, config, params)
        solved.append(sol)
        return sense * sol.mu

    try:
        minimize_scalar(
            objective,
            bounds=(lo.amplitude, hi.amplitude),
            method="bounded",
            options={"xatol": FOLD_XTOL * (hi.amplitude - lo.amplitude)},
        )
    except (NoConvergence, SingularJacobian):
        return None
    return min(solved, key=lambda s: sense * s.mu) if solved else None


def _fold_event(
    points: Sequence[WaveSolution],
    params: Optional[OperatorParams] = None,
    config: Optional[ContinuationConfig] = None,
) -> Optional[BranchEvent]:
    """
    Fold between the last three points.

    With params and config the turning point is located by _locate_fold;
    otherwise (or if that fails) at the vertex of the quadratic through
    the three points.
    """
    if len(points) < 3:
        return None
    p0, p1, p2 = points[-3:]
    if (p1.mu - p0.mu) * (p2.mu - p1.mu) >= 0:
        return None

    located = None
    if params is not None and config is not None:
        located = _locate_fold((p0, p1, p2), params, config)
    if located is not None:
        a_fold, mu_fold = located.amplitude, located.mu
    else:
        a = np.array([p0.amplitude, p1.amplitude, p2.amplitude])
        m = np.array([p0.mu, p1.mu, p2.mu])
        a_fold, mu_fold = p1.amplitude, p1.mu
        coeffs = np.polyfit(a - a[1], m, 2)
        if coeffs[0] != 0.0:
            shift = -coeffs[1] / (2.0 * coeffs[0])
            if a.min() - a[1] <= shift <= a.max() - a[1]:
                a_fold = a[1] + shift
                mu_fold = float(np.polyval(coeffs, shift))
    return BranchEvent(
        index=len(points) - 2,
        kind=EventKind.FOLD,
        mu=float(mu_fold),
        amplitude=float(a_fold),
        detail={
            "mu_fold": float(mu_fold),
            "a_fold": float(a_fold),
            "vinf": float(a_fold),
            "located": located is not None,
        },
    )


def _emit_fold(fold: BranchEvent, stage: str) -> None:
    emit_event(
        "fold",
        f"Fold at mu={fold.mu:.10g}, a={fold.amplitude:.8g}",
        stage=stage,
        counters_delta={"folds": 1},
        data=fold.to_dict(),
    )


# -- resolution ----------------------------------------------------------------


def _under_resolved(sol: WaveSolution, config: ContinuationConfig) -> bool:
    return coefficient_tail(sol.coeffs.coeffs)["tail_max"] > config.tail_tol


def _double_resolution(
    points: Sequence[WaveSolution], params: OperatorParams, config: ContinuationConfig, stage: str
) -> Optional[List[WaveSolution]]:
    """
    Every point re-converged on 2N modes at its own amplitude, so the whole
    branch shares one grid. None when doubling is capped or a solve fails.
    """
    M = 2 * points[-1].n_modes
    if M > config.max_modes:
        return None
    fine = []
    for p in points:
        if p.amplitude == 0.0:
            fine.append(WaveSolution.zero(p.mu, params.r, M, dealias=config.dealias))
            continue
        try:
            fine.append(newton_solve((p.mu, p.coeffs.padded(M)), p.amplitude, config, params))
        except (NoConvergence, SingularJacobian) as exc:
            emit_event(
                "resolution_doubled",
                f"Re-converging on N={M} failed at a={p.amplitude:.8g}: {exc}",
                level="warn",
                stage=stage,
                data={"N": M, "amplitude": p.amplitude},
            )
            return None
    emit_event(
        "resolution_doubled",
        f"Branch re-converged on N={M} ({len(fine)} points, last a={fine[-1].amplitude:.8g})",
        stage=stage,
        counters_delta={"resolution_doublings": 1},
        data={"N": M, "points": len(fine), "mu": fine[-1].mu},
    )
    return fine


def _relocate_folds(
    points: Sequence[WaveSolution],
    events: Sequence[BranchEvent],
    params: OperatorParams,
    config: ContinuationConfig,
) -> List[BranchEvent]:
    """Fold events recomputed from `points`; other events are kept."""
    kept = [e for e in events if e.kind != EventKind.FOLD]
    for end in range(3, len(points) + 1):
        fold = _fold_event(points[:end], params, config)
        if fold is not None:
            kept.append(fold)
    return kept


# -- termination ---------------------------------------------------------------


def _underflow_kind(last: WaveSolution, at_crest_bound: bool) -> EventKind:
    angle = solution_crest_angle(last)
    if abs(angle.degrees - EXTREME_DEGREES) <= EXTREME_UNDERFLOW_DEGREES:
        return EventKind.TERMINATION_EXTREME
    if at_crest_bound:
        return EventKind.TERMINATION_CREST_BOUND
    return EventKind.TERMINATION_NO_CONVERGENCE


def _terminate(points, kind: EventKind, reason: str, stage: str) -> BranchEvent:
    last = points[-1]
    emit_event(
        "termination",
        f"Trace stopped ({kind.value}) at mu={last.mu:.12g}, a={last.amplitude:.6g}: {reason}",
        level="warn" if kind in (EventKind.TERMINATION_NO_CONVERGENCE, EventKind.TERMINATION_CREST_BOUND) else "info",
        stage=stage,
        data={"kind": kind.value, "mu": last.mu, "amplitude": last.amplitude, "points": len(points), "N": last.n_modes},
    )
    return BranchEvent(len(points) - 1, kind, last.mu, last.amplitude, {"reason": reason})


def trace_from(
    points: Sequence[WaveSolution],
    params: OperatorParams,
    config: ContinuationConfig,
    origin: BifurcationPoint,
    direction: int = 1,
    events: Sequence[BranchEvent] = (),
) -> Branch:
    """
    Continue an existing list of converged points in amplitude.

    ARGS:
        points: at least one converged solution (two give a secant predictor)
        params: annulus radius
        config: step control
        origin: bifurcation point recorded on the branch
        direction: +1 to increase the amplitude, -1 to decrease it
        events: events already attached to `points`

    RETURNS:
        Branch with a termination event as its last event. All points share
        one grid; it may be finer than the grid of `points`.

    RAISES:
        NoConvergence: strict mode and the trace stalled (partial branch
                       attached)
    """
    if direction not in (1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction}")
    if not points:
        raise ValueError("trace_from needs at least one converged point")

    points = list(points)
    events = list(events)
    step = config.initial_step
    stage = "trace"
    doubling_failed = False

    def refine_all() -> bool:
        nonlocal points, events, doubling_failed
        if doubling_failed:
            return False
        fine = _double_resolution(points, params, config, stage)
        if fine is None:
            doubling_failed = True
            return False
        points = fine
        events = _relocate_folds(points, events, params, config)
        return True

    while True:
        last = points[-1]
        if len(points) >= config.max_points:
            events.append(_terminate(points, EventKind.TERMINATION_MAX_POINTS, "max_points reached", stage))
            break
        if direction > 0:
            if config.max_amplitude - last.amplitude <= config.min_step:
                events.append(
                    _terminate(points, EventKind.TERMINATION_MAX_AMPLITUDE, "max_amplitude reached", stage)
                )
                break
            a_next = min(last.amplitude + step, config.max_amplitude)
        else:
            a_next = last.amplitude - step
            if a_next <= 0.0:
                events.append(
                    _terminate(points, EventKind.TERMINATION_MAX_AMPLITUDE, "amplitude floor reached", stage)
                )
                break

        reason = ""
        at_bound = False
        sol = None
        try:
            sol = newton_solve(_predict(points, a_next), a_next, config, params)
            if not _admissible(sol, config):
                reason = f"crest {sol.peak_elevation():.8g} above mu/2 = {0.5 * sol.mu:.8g}"
                at_bound = True
                sol = None
        except (NoConvergence, SingularJacobian) as exc:
            reason = str(exc)

        if sol is None:
            if at_bound and refine_all():
                continue
            step *= config.step_shrink
            emit_event(
                "step_rejected",
                f"Rejected a={a_next:.8g}: {reason}",
                stage=stage,
                counters_delta={"steps_rejected": 1},
                data={"amplitude": a_next, "new_step": step, "crest_bound": at_bound},
            )
            if step < config.min_step:
                kind = _underflow_kind(last, at_bound)
                events.append(_terminate(points, kind, f"step underflow: {reason}", stage))
                if config.strict and kind != EventKind.TERMINATION_EXTREME:
                    partial = Branch(params, origin, tuple(points), tuple(events))
                    raise NoConvergence(
                        f"Branch trace failed at a={a_next:.8g}: {reason}", partial=partial
                    )
                break
            continue

        points.append(sol)
        emit_event(
            "point_accepted",
            f"mu={sol.mu:.12g} a={sol.amplitude:.8g} ({sol.iterations} its, N={sol.n_modes})",
            stage=stage,
            counters_delta={"points_accepted": 1, "newton_iterations": sol.iterations},
            data={"index": len(points) - 1, "mu": sol.mu, "amplitude": sol.amplitude},
        )

        if _under_resolved(sol, config) and refine_all():
            sol = points[-1]
        else:
            fold = _fold_event(points, params, config)
            if fold is not None:
                events.append(fold)
                _emit_fold(fold, stage)

        if sol.iterations <= config.fast_iterations:
            step = min(step * config.step_grow, config.max_step)

        angle = solution_crest_angle(sol)
        if abs(angle.degrees - EXTREME_DEGREES) <= 2.0 * config.extreme_angle_tol:
            events.append(
                _terminate(
                    points,
                    EventKind.TERMINATION_EXTREME,
                    f"crest angle {angle.degrees:.3f} deg",
                    stage,
                )
            )
            break

    return Branch(params, origin, tuple(points), tuple(events))


def trace_branch(
    n: int,
    params: OperatorParams,
    config: ContinuationConfig,
    grid: Optional[SpectralGrid] = None,
    sign: int = 1,
) -> Branch:
    """
    Trace the primary branch C_n from (mu_n, 0) by stepping the amplitude.

    ARGS:
        n: mode index, 1 <= n < N
        params: annulus radius
        config: step control (steps are divided by n, see for_mode)
        grid: starting collocation grid (DEFAULT_N modes if omitted)
        sign: sign of the cos nt seed; -1 gives the half-period shifted wave

    RETURNS:
        Branch whose first point is the converged asymptotic seed

    RAISES:
        ValueError: n not representable, bad sign
        NoConvergence / SingularJacobian: the seed itself did not converge
    """
    grid = grid or SpectralGrid(DEFAULT_N)
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    mu_n, _ = asymptotic_seed(n, 0.0, params, grid)
    origin = BifurcationPoint(
        mu_star=mu_n,
        kind=PointKind.PRIMARY,
        mode=int(n),
        r=params.r,
        null_direction=CosineSeries.mode(int(n), grid.N),
    )
    emit_event(
        "trace_start",
        f"Tracing C_{n} at r={params.r} from mu_{n}={mu_n:.12g} with N={grid.N} (max {config.max_modes})",
        stage="trace",
        data={"mode": n, "r": params.r, "N": grid.N, "max_modes": config.max_modes, "mu_star": mu_n},
    )

    config = config.for_mode(n)
    a0 = min(config.initial_step, config.max_amplitude)
    if a0 <= 0.0:
        trivial = WaveSolution.zero(mu_n, params.r, grid.N, dealias=config.dealias)
        end = _terminate([trivial], EventKind.TERMINATION_MAX_AMPLITUDE, "max_amplitude is zero", "trace")
        return Branch(params, origin, (trivial,), (end,))

    mu_seed, seed = asymptotic_seed(n, sign * a0, params, grid)
    first = newton_solve((mu_seed, seed), a0, config, params)
    return trace_from([first], params, config, origin, direction=1)


def refine(
    sol: WaveSolution,
    params: OperatorParams,
    config: ContinuationConfig,
    factor: int = 2,
) -> WaveSolution:
    """
    Re-converge `sol` on factor * N modes at the same amplitude.

    The amplitude equation is pinned at the coarse node that attains the
    max, so both solutions satisfy the same constraint.
    """
    if factor < 1:
        raise ValueError(f"Refinement factor must be >= 1, got {factor}")
    k = int(np.argmax(np.abs(sol.values)))
    pin = float(sol.grid.nodes[k])
    guess = (sol.mu, sol.coeffs.padded(sol.n_modes * factor))
    return newton_solve(guess, sol.amplitude, config, params, pin=pin)


# =============================================================================
# PARALLEL TRACES
# =============================================================================


@dataclass(frozen=True)
class TraceRequest:
    """One (r, n) trace for trace_many."""

    mode: int
    r: float
    n_modes: int = DEFAULT_N
    sign: int = 1


@dataclass(frozen=True, eq=False)
class TraceOutcome:
    request: TraceRequest
    branch: Optional[Branch] = None
    error: Optional[BaseException] = None


def _run_request(request: TraceRequest, config: ContinuationConfig) -> TraceOutcome:
    try:
        branch = trace_branch(
            request.mode,
            OperatorParams(request.r),
            config,
            SpectralGrid(request.n_modes),
            sign=request.sign,
        )
        return TraceOutcome(request, branch=branch)
    except (BabenkoError, ValueError) as exc:
        emit_event(
            "error",
            f"Trace r={request.r} n={request.mode} failed: {exc}",
            level="error",
            stage="trace",
        )
        return TraceOutcome(request, error=exc)


def trace_many(
    requests: Sequence[TraceRequest], config: ContinuationConfig, jobs: int = 1
) -> List[TraceOutcome]:
    """
    Run independent traces, optionally on a thread pool.

    Each worker builds its own solver context; results keep request order.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(requests) <= 1:
        return [_run_request(req, config) for req in requests]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda req: _run_request(req, config), requests))

"""
Branch and bifurcation-point records shared by continuation, bifurcation
and the branch-file layer.

All records are frozen; a Branch grows new events through with_events().
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from babenko_waves.babenko_eq import WaveSolution
from babenko_waves.spectral import CosineSeries, OperatorParams


class EventKind(str, Enum):
    FOLD = "fold"
    SECONDARY_BIFURCATION = "secondary_bifurcation"
    TERMINATION_EXTREME = "termination_extreme"
    TERMINATION_CREST_BOUND = "termination_crest_bound"
    TERMINATION_NO_CONVERGENCE = "termination_no_convergence"
    TERMINATION_MAX_POINTS = "termination_max_points"
    TERMINATION_MAX_AMPLITUDE = "termination_max_amplitude"

    @property
    def is_termination(self) -> bool:
        return self.value.startswith("termination_")


class PointKind(str, Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass(frozen=True)
class BranchEvent:
    """Annotation attached to point `index` of a branch."""

    index: int
    kind: EventKind
    mu: float
    amplitude: float
    detail: Dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": int(self.index),
            "kind": self.kind.value,
            "mu": float(self.mu),
            "amplitude": float(self.amplitude),
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BranchEvent":
        return cls(
            index=int(data["index"]),
            kind=EventKind(data["kind"]),
            mu=float(data["mu"]),
            amplitude=float(data["amplitude"]),
            detail=dict(data.get("detail") or {}),
        )


@dataclass(frozen=True, eq=False)
class BifurcationPoint:
    """
    Bifurcation point on the zero solution (primary) or on a host branch
    (secondary).

    For secondary points the host solution at the bisected amplitude, the
    host tangent dc/da and the kernel of the mu-fixed Jacobian are kept so
    that branch switching needs nothing else.
    """

    mu_star: float
    kind: PointKind
    mode: int
    r: float
    amplitude: float = 0.0
    host_index: Optional[int] = None
    null_direction: Optional[CosineSeries] = None
    host_solution: Optional[WaveSolution] = None
    host_tangent: Optional[CosineSeries] = None
    kernel_residual: float = float("nan")

    @property
    def params(self) -> OperatorParams:
        return OperatorParams(self.r)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "mu_star": float(self.mu_star),
            "kind": self.kind.value,
            "mode": int(self.mode),
            "r": float(self.r),
            "amplitude": float(self.amplitude),
            "host_index": self.host_index,
        }
        if self.null_direction is not None:
            data["null_direction"] = self.null_direction.coeffs.tolist()
        if self.host_solution is not None:
            data["host_mu"] = float(self.host_solution.mu)
            data["host_coeffs"] = self.host_solution.coeffs.coeffs.tolist()
            data["dealias"] = bool(self.host_solution.dealias)
        if self.host_tangent is not None:
            data["host_tangent"] = self.host_tangent.coeffs.tolist()
        if np.isfinite(self.kernel_residual):
            data["kernel_residual"] = float(self.kernel_residual)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BifurcationPoint":
        host = None
        if "host_coeffs" in data:
            host = WaveSolution.build(
                data["host_mu"],
                data["r"],
                CosineSeries(np.asarray(data["host_coeffs"], dtype=float)),
                dealias=bool(data.get("dealias", False)),
            )
        null = data.get("null_direction")
        tangent = data.get("host_tangent")
        return cls(
            mu_star=float(data["mu_star"]),
            kind=PointKind(data["kind"]),
            mode=int(data["mode"]),
            r=float(data["r"]),
            amplitude=float(data.get("amplitude", 0.0)),
            host_index=data.get("host_index"),
            null_direction=None if null is None else CosineSeries(np.asarray(null, dtype=float)),
            host_solution=host,
            host_tangent=None if tangent is None else CosineSeries(np.asarray(tangent, dtype=float)),
            kernel_residual=float(data.get("kernel_residual", float("nan"))),
        )


@dataclass(frozen=True, eq=False)
class Branch:
    """Ordered solutions traced from one bifurcation point, plus events."""

    params: OperatorParams
    origin: BifurcationPoint
    points: Tuple[WaveSolution, ...]
    events: Tuple[BranchEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        ordered = sorted(self.events, key=lambda e: (e.index, e.kind.is_termination))
        object.__setattr__(self, "events", tuple(ordered))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_modes(self) -> int:
        return self.points[0].n_modes

    @property
    def last(self) -> WaveSolution:
        return self.points[-1]

    def mus(self) -> np.ndarray:
        return np.array([p.mu for p in self.points])

    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points])

    def thetas(self) -> np.ndarray:
        """
        Continuation parameter: the first amplitude plus the accumulated
        |amplitude| steps, so it is nondecreasing in both trace directions.
        """
        amps = self.amplitudes()
        if amps.size == 0:
            return amps
        return amps[0] + np.concatenate(([0.0], np.cumsum(np.abs(np.diff(amps)))))

    def events_of(self, kind: EventKind) -> List[BranchEvent]:
        return [e for e in self.events if e.kind == kind]

    @property
    def termination(self) -> Optional[BranchEvent]:
        ends = [e for e in self.events if e.kind.is_termination]
        return ends[-1] if ends else None

    def fold_estimates(self) -> List[Tuple[float, float]]:
        """(mu_fold, a_fold) for each fold event."""
        return [
            (float(e.detail.get("mu_fold", e.mu)), float(e.detail.get("a_fold", e.amplitude)))
            for e in self.events_of(EventKind.FOLD)
        ]

    def with_events(self, extra: Iterable[BranchEvent]) -> "Branch":
        return replace(self, events=tuple(self.events) + tuple(extra))

"""
================================================================================
babenko_waves/io_branch.py - Branch Files and Plot-Data Export
================================================================================

PURPOSE:
    Versioned, self-describing JSON storage of traced branches, and CSV
    export for external plotting.

FILE LAYOUT (format_version "1.0"):
    {
        "header":  {format_version, kind, r, N, mode, dealias, origin, host,
                    config, sha256},
        "records": [{theta, mu, amplitude, coeffs}, ...],   ordered by theta
        "events":  [{index, kind, mu, amplitude, detail}, ...]
    }

HOW IT WORKS:
    - Floats are rounded to 15 significant digits before serialization,
      keys are sorted and separators fixed, so write -> read -> write gives
      identical bytes
    - sha256 covers the canonical records + events block
    - Writes go to a temp file followed by os.replace
================================================================================
"""

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from babenko_waves.babenko_eq import WaveSolution
from babenko_waves.errors import FormatVersionMismatch
from babenko_waves.models import BifurcationPoint, Branch, BranchEvent
from babenko_waves.spectral import CosineSeries, OperatorParams

FORMAT_VERSION = "1.0"
SIGNIFICANT_DIGITS = 15


def round_float(x: float) -> float:
    return float(f"{float(x):.{SIGNIFICANT_DIGITS}g}")


def format_float(x: float) -> str:
    return f"{float(x):.{SIGNIFICANT_DIGITS}g}"


def _clean(obj: Any) -> Any:
    """JSON-ready copy: numpy unwrapped, floats rounded, non-finite as strings."""
    if hasattr(obj, "tolist") and not isinstance(obj, (str, bytes)):
        obj = obj.tolist()
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return round_float(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"Cannot serialize {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def block_digest(records: Sequence[Dict[str, Any]], events: Sequence[Dict[str, Any]]) -> str:
    payload = canonical_json({"records": list(records), "events": list(events)})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)
    return path


# =============================================================================
# BRANCH FILE
# =============================================================================


@dataclass(frozen=True)
class BranchFile:
    """In-memory form of a branch file; header carries the digest."""

    header: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def r(self) -> float:
        return float(self.header["r"])

    @property
    def n_modes(self) -> int:
        return int(self.header["N"])

    def to_dict(self) -> Dict[str, Any]:
        return {"header": self.header, "records": self.records, "events": self.events}

    def to_json(self) -> str:
        return canonical_json(self.to_dict()) + "\n"

    def solution(self, index: int) -> WaveSolution:
        if not -len(self.records) <= index < len(self.records):
            raise ValueError(f"Point index {index} out of range for {len(self.records)} records")
        record = self.records[index]
        return WaveSolution.build(
            float(record["mu"]),
            self.r,
            CosineSeries(np.asarray(record["coeffs"], dtype=float)),
            dealias=bool(self.header.get("dealias", False)),
        )

    def to_branch(self) -> Branch:
        points = tuple(self.solution(i) for i in range(len(self.records)))
        return Branch(
            OperatorParams(self.r),
            BifurcationPoint.from_dict(self.header["origin"]),
            points,
            tuple(BranchEvent.from_dict(e) for e in self.events),
        )


def branch_to_file(
    branch: Branch,
    config: Optional[Dict[str, Any]] = None,
    host: Optional[Dict[str, Any]] = None,
) -> BranchFile:
    """
    Canonical BranchFile for `branch`.

    ARGS:
        branch: traced branch
        config: RunConfig snapshot stored in the header
        host: for switched branches, {"file", "event", "mu", "sign", "eps"} of the source
    """
    thetas = branch.thetas()
    records = _clean(
        [
            {
                "theta": float(theta),
                "mu": float(p.mu),
                "amplitude": float(p.amplitude),
                "coeffs": p.coeffs.coeffs,
            }
            for theta, p in zip(thetas, branch.points)
        ]
    )
    events = _clean([e.to_dict() for e in branch.events])
    header = _clean(
        {
            "format_version": FORMAT_VERSION,
            "kind": "branch",
            "r": float(branch.params.r),
            "N": int(branch.n_modes),
            "mode": int(branch.origin.mode),
            "dealias": bool(branch.points[0].dealias) if len(branch) else False,
            "origin": branch.origin.to_dict(),
            "host": host,
            "config": config or {},
        }
    )
    header["sha256"] = block_digest(records, events)
    return BranchFile(header, records, events)


def validate_branch_file(data: Dict[str, Any], source: str = "<memory>") -> BranchFile:
    """
    Check a decoded branch file.

    RAISES:
        FormatVersionMismatch: missing or unsupported format_version
        ValueError: structural problems, unordered theta, digest mismatch
    """
    if not isinstance(data, dict) or "header" not in data:
        raise ValueError(f"{source}: not a branch file (no header)")
    header = data["header"]
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{source}: format_version {version!r} is not supported (expected {FORMAT_VERSION!r})"
        )
    if header.get("kind") != "branch":
        raise ValueError(f"{source}: kind {header.get('kind')!r} is not 'branch'")

    records = list(data.get("records", []))
    events = list(data.get("events", []))
    errors = []
    n = header.get("N")
    for i, record in enumerate(records):
        if len(record.get("coeffs", [])) != n:
            errors.append(f"record {i} has {len(record.get('coeffs', []))} coefficients, header N={n}")
    thetas = [record.get("theta") for record in records]
    if any(b < a for a, b in zip(thetas, thetas[1:])):
        errors.append("records are not ordered by theta")
    if header.get("sha256") != block_digest(records, events):
        errors.append("sha256 digest does not match records and events")
    if errors:
        raise ValueError(f"{source}: invalid branch file:\n  - " + "\n  - ".join(errors))
    return BranchFile(header, records, events)


def write_branch(path: os.PathLike, branch_file: BranchFile) -> Path:
    return _atomic_write_text(Path(path), branch_file.to_json())


def read_branch(path: os.PathLike) -> BranchFile:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    return validate_branch_file(data, source=str(path))


def write_json(path: os.PathLike, payload: Dict[str, Any]) -> Path:
    """Canonical JSON report."""
    return _atomic_write_text(Path(path), canonical_json(payload) + "\n")


# =============================================================================
# CSV EXPORT
# =============================================================================


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: os.PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with a header row; floats at 15 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    os.replace(tmp, path)
    return path


def write_branch_csv(path: os.PathLike, branch_file: BranchFile) -> Path:
    """One row per record: theta, mu, amplitude, b_0 .. b_{N-1}."""
    n = branch_file.n_modes
    columns = ["theta", "mu", "amplitude"] + [f"b_{k}" for k in range(n)]
    rows = (
        [rec["theta"], rec["mu"], rec["amplitude"], *rec["coeffs"]] for rec in branch_file.records
    )
    return write_csv(path, columns, rows)

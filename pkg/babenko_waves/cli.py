"""
================================================================================
babenko_waves/cli.py - Command-Line Driver
================================================================================

COMMANDS:
    babenko-waves spectrum    --r R [--n-max K]
    babenko-waves trace       --r R[,R...] --mode N [--mode N ...] [--jobs J]
    babenko-waves switch      BRANCH_FILE --event I [--sign +1|-1]
    babenko-waves reconstruct BRANCH_FILE --point SELECTOR
    babenko-waves bifdiag     [BRANCH_FILE ...] [--output NAME]

    Shared flags: --config FILE, --out DIR, --format json|csv, --N, --max-N, --tol,
    --step, --max-step, --max-amplitude, --max-points, --dealias, --samples

EXIT STATUS:
    0  ok
    1  user error (bad flags or config, missing file, format mismatch)
    2  numerical failure (no convergence, singular Jacobian, a trace stalled
       by either, or at the crest bound; fallback to host)

Every command opens a telemetry run under <out>/runs/<run_id>/.
================================================================================
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from rich import box
from rich.console import Console
from rich.table import Table

from babenko_waves import __version__
from babenko_waves.bifurcation import (
    annotate_secondary,
    detect_secondary,
    primary_points,
    switch_branch,
)
from babenko_waves.config import RunConfig, load_config
from babenko_waves.continuation import TraceRequest, trace_many
from babenko_waves.errors import BabenkoError
from babenko_waves.io_branch import (
    BranchFile,
    branch_to_file,
    format_float,
    read_branch,
    write_branch,
    write_branch_csv,
    write_csv,
    write_json,
)
from babenko_waves.models import BifurcationPoint, EventKind
from babenko_waves.reconstruct import boundary_gaps, reconstruct, solution_crest_angle, wave_summary
from babenko_waves.spectral import OperatorParams, eigenvalue_lambda, multiplier_beta
from babenko_waves.telemetry import emit_event, flush_events, init_telemetry, set_status

console = Console()

# Terminations that leave a trace short of where it was asked to go (exit status 2)
STALLED = (EventKind.TERMINATION_NO_CONVERGENCE, EventKind.TERMINATION_CREST_BOUND)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 (2 is reserved for numerical failures)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"[ERROR] {self.prog}: {message}", file=sys.stderr)
        raise SystemExit(1)


# =============================================================================
# HELPERS
# =============================================================================


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "N": getattr(args, "N", None),
        "MAX_N": getattr(args, "max_N", None),
        "NEWTON_TOL": getattr(args, "tol", None),
        "INITIAL_STEP": getattr(args, "step", None),
        "MAX_STEP": getattr(args, "max_step", None),
        "MAX_AMPLITUDE": getattr(args, "max_amplitude", None),
        "MAX_POINTS": getattr(args, "max_points", None),
        "DEALIAS": getattr(args, "dealias", None),
        "OUT_DIR": getattr(args, "out", None),
        "FORMAT": getattr(args, "format", None),
        "JOBS": getattr(args, "jobs", None),
        "SAMPLES": getattr(args, "samples", None),
        "SWITCH_SIGN": getattr(args, "sign", None),
    }


def _open_run(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> RunConfig:
    overrides = _overrides(args)
    overrides.update(extra or {})
    config = load_config(args.config, overrides=overrides)
    init_telemetry(config=config.snapshot(), command=args.command, out_dir=config.out_dir)
    emit_event("run_start", f"babenko-waves {args.command}", stage=args.command)
    return config


def _parse_r_list(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"--r expects a comma-separated list of numbers, got {text!r}") from exc
    if not values:
        raise ValueError("--r is empty")
    for r in values:
        OperatorParams(r)
    return values


def _branch_name(r: float, mode: int, sign: int = 1) -> str:
    suffix = "" if sign == 1 else "_neg"
    return f"branch_r{format_float(r)}_n{mode}{suffix}"


def _export_branch(branch_file: BranchFile, config: RunConfig, stem: str) -> List[Path]:
    out = config.out_path
    paths = [write_branch(out / f"{stem}.json", branch_file)]
    if config.format == "csv":
        paths.append(write_branch_csv(out / f"{stem}.csv", branch_file))
    emit_event(
        "export",
        f"Wrote {len(branch_file.records)} records to {paths[0]}",
        stage="export",
        counters_delta={"branches_written": 1},
        artifact_paths=[str(p) for p in paths],
    )
    return paths


def select_point(branch_file: BranchFile, selector: str) -> int:
    """
    Resolve a point selector to a record index.

    SELECTORS:
        <int>       record index (negative counts from the end)
        last        final record
        fold:<k>    record of the k-th fold event (0-based)
        mu:<value>  record with mu closest to value
    """
    n = len(branch_file.records)
    if n == 0:
        raise ValueError("Branch file has no records")
    text = selector.strip()
    if text == "last":
        return n - 1
    if text.startswith("fold:"):
        folds = [e for e in branch_file.events if e["kind"] == EventKind.FOLD.value]
        k = int(text[len("fold:"):])
        if not 0 <= k < len(folds):
            raise ValueError(f"Selector {selector!r}: branch has {len(folds)} fold events")
        return int(folds[k]["index"])
    if text.startswith("mu:"):
        target = float(text[len("mu:"):])
        mus = np.array([rec["mu"] for rec in branch_file.records])
        return int(np.argmin(np.abs(mus - target)))
    try:
        index = int(text)
    except ValueError as exc:
        raise ValueError(f"Unknown point selector {selector!r}") from exc
    if not -n <= index < n:
        raise ValueError(f"Point index {index} out of range for {n} records")
    return index % n


# =============================================================================
# COMMANDS
# =============================================================================


def cmd_spectrum(args: argparse.Namespace) -> int:
    config = _open_run(args, {"R": args.r})
    params = OperatorParams(config.r)
    points = primary_points(params, args.n_max)

    table = Table(title=f"Primary bifurcation points, r = {config.r:g}", box=box.MINIMAL, header_style="bold magenta")
    table.add_column("n", justify="right", style="cyan")
    table.add_column("mu_n", justify="right")
    table.add_column("lambda_n", justify="right")
    table.add_column("beta_n", justify="right")
    rows = []
    for p in points:
        row = (p.mode, p.mu_star, eigenvalue_lambda(p.mode, params.r), multiplier_beta(p.mode, params.r))
        rows.append(row)
        table.add_row(str(row[0]), *(format_float(v) for v in row[1:]))
    console.print(table)

    if config.format == "csv":
        path = write_csv(
            config.out_path / f"spectrum_r{format_float(config.r)}.csv",
            ["n", "mu_n", "lambda_n", "beta_n"],
            rows,
        )
        emit_event("export", f"Wrote {path}", stage="spectrum", artifact_paths=[str(path)])
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    r_values = _parse_r_list(args.r)
    extra = {}
    if r_values:
        extra["R"] = r_values[0]
    if args.mode:
        extra["MODE"] = args.mode[0]
    config = _open_run(args, extra)
    r_values = r_values or [config.r]
    modes = args.mode or [config.mode]
    cont = config.continuation_config()

    requests = [
        TraceRequest(mode=n, r=r, n_modes=config.n_modes, sign=config.switch_sign)
        for r in r_values
        for n in modes
    ]
    outcomes = trace_many(requests, cont, jobs=config.jobs)

    table = Table(title="Traced branches", box=box.MINIMAL, header_style="bold blue")
    for column in ("r", "n", "points", "folds (mu)", "secondary (mu)", "end mu", "crest angle", "termination"):
        table.add_column(column, justify="right" if column != "termination" else "left")

    status = 0
    for outcome in outcomes:
        req = outcome.request
        if outcome.error is not None:
            status = max(status, 2 if isinstance(outcome.error, BabenkoError) else 1)
            table.add_row(format_float(req.r), str(req.mode), "-", "-", "-", "-", "-", f"error: {outcome.error}")
            continue
        branch = outcome.branch
        if len(branch) >= 2:
            branch = annotate_secondary(branch, detect_secondary(branch, cont))
        branch_file = branch_to_file(branch, config=config.snapshot())
        _export_branch(branch_file, config, _branch_name(req.r, req.mode, req.sign))

        folds = ", ".join(f"{mu:.6f}" for mu, _ in branch.fold_estimates()) or "-"
        secondary = ", ".join(f"{e.mu:.6f}" for e in branch.events_of(EventKind.SECONDARY_BIFURCATION)) or "-"
        angle = solution_crest_angle(branch.last)
        end = branch.termination
        if end is not None and end.kind in STALLED:
            status = max(status, 2)
            emit_event(
                "error",
                f"Trace r={req.r} n={req.mode} stalled ({end.kind.value}): {end.detail.get('reason', '')}",
                level="error",
                stage="trace",
                data={"kind": end.kind.value, "mu": end.mu, "amplitude": end.amplitude},
            )
        table.add_row(
            format_float(req.r),
            str(req.mode),
            str(len(branch)),
            folds,
            secondary,
            f"{branch.last.mu:.8f}",
            f"{angle.degrees:.2f}",
            end.kind.value if end else "-",
        )
    console.print(table)
    return status


def cmd_switch(args: argparse.Namespace) -> int:
    config = _open_run(args)
    path = Path(args.branch_file)
    host_file = read_branch(path)
    if not 0 <= args.event < len(host_file.events):
        raise ValueError(f"Event index {args.event} out of range for {len(host_file.events)} events")
    event = host_file.events[args.event]
    if event["kind"] != EventKind.SECONDARY_BIFURCATION.value:
        raise ValueError(f"Event {args.event} is {event['kind']!r}, not a secondary bifurcation")

    point = BifurcationPoint.from_dict(event["detail"])
    cont = config.continuation_config(dealias=bool(host_file.header.get("dealias", False)))
    switched = switch_branch(
        point,
        cont,
        OperatorParams(host_file.r),
        sign=config.switch_sign,
        eps_factors=config.switch_eps_factors,
    )
    for side in switched:
        branch = side.branch
        host = {
            "file": path.name,
            "event": int(args.event),
            "mu": point.mu_star,
            "sign": side.sign,
            "eps": side.eps,
        }
        branch_file = branch_to_file(branch, config=config.snapshot(), host=host)
        suffix = "" if side.sign == 1 else "_neg"
        paths = _export_branch(branch_file, config, f"{path.stem}_switch{args.event}{suffix}")

        end = branch.termination
        console.print(
            f"[green]Switched[/green] at mu={point.mu_star:.8f} (sign {side.sign:+d}): {len(branch)} points, "
            f"end mu={branch.last.mu:.8f}, termination={end.kind.value if end else '-'} -> {paths[0]}"
        )
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    config = _open_run(args)
    path = Path(args.branch_file)
    branch_file = read_branch(path)
    index = select_point(branch_file, args.point)
    sol = branch_file.solution(index)

    dom = reconstruct(sol, samples=config.samples)
    summary = wave_summary(sol, dom)
    summary["gaps"] = boundary_gaps(dom)
    summary["point_index"] = index
    summary["source"] = path.name

    stem = config.out_path / f"{path.stem}_p{index}"
    written = [
        write_csv(f"{stem}_surface.csv", ["t", "x", "y"], zip(dom.surface_t, dom.surface_x, dom.surface_y)),
        write_csv(f"{stem}_bottom.csv", ["t", "x_h"], zip(dom.bottom_t, dom.bottom_x)),
        write_csv(f"{stem}_side.csv", ["u", "y"], zip(dom.side_u, dom.side_y)),
        write_json(f"{stem}_report.json", summary),
    ]
    emit_event(
        "reconstruct",
        f"Reconstructed point {index} of {path.name}: h={dom.h:.8g}, checks ok={dom.checks.ok}",
        level="success" if dom.checks.ok else "warn",
        stage="reconstruct",
        data={"index": index, "h": dom.h, "crest_angle": summary["crest_angle"]},
        artifact_paths=[str(p) for p in written],
    )

    table = Table(title=f"{path.name} point {index}", box=box.MINIMAL, show_header=False)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    for key in ("mu", "h", "B", "crest", "trough", "crest_to_trough", "vinf", "crest_angle"):
        table.add_row(key, format_float(summary[key]))
    table.add_row("correspondence", "ok" if dom.checks.ok else "[red]FAILED[/red]")
    console.print(table)
    return 0


def cmd_bifdiag(args: argparse.Namespace) -> int:
    config = _open_run(args)
    rows = []
    mus = []
    for name in args.branch_files:
        branch_file = read_branch(name)
        label = Path(name).stem
        for record in branch_file.records:
            rows.append((label, record["mu"], record["amplitude"]))
            mus.append(record["mu"])
    for mu in sorted(set(mus)):
        rows.append(("bound", mu, 0.5 * mu))

    path = write_csv(config.out_path / args.output, ["series", "mu", "vinf"], rows)
    emit_event("export", f"Wrote bifurcation diagram {path}", stage="bifdiag", artifact_paths=[str(path)])
    console.print(f"Wrote {len(rows)} rows to {path}")
    return 0


# =============================================================================
# PARSER
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--out", help="Output directory (default: BABENKO_OUT_DIR or ./babenko_out)")
    common.add_argument("--format", choices=["json", "csv"], help="Export format")
    common.add_argument("--N", type=int, help="Number of collocation points")
    common.add_argument("--max-N", dest="max_N", type=int, help="Finest grid a trace may double to")
    common.add_argument("--tol", type=float, help="Newton residual tolerance")
    common.add_argument("--step", type=float, help="Initial amplitude step")
    common.add_argument("--max-step", type=float, help="Largest amplitude step")
    common.add_argument("--max-amplitude", type=float, help="Stop tracing at this amplitude")
    common.add_argument("--max-points", type=int, help="Stop tracing after this many points")
    common.add_argument("--dealias", action="store_true", default=None, help="Evaluate products on a 2N grid")
    common.add_argument("--samples", type=int, help="Reconstruction samples per boundary piece")

    parser = _Parser(prog="babenko-waves", description="Periodic gravity waves via Babenko's equation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)

    spectrum = subparsers.add_parser("spectrum", parents=[common], help="Print the mu_n table")
    spectrum.add_argument("--r", type=float, help="Annulus radius")
    spectrum.add_argument("--n-max", type=int, default=10, help="Largest mode")
    spectrum.set_defaults(handler=cmd_spectrum)

    trace = subparsers.add_parser("trace", parents=[common], help="Trace primary branches")
    trace.add_argument("--r", help="Annulus radius, or a comma-separated list")
    trace.add_argument("--mode", type=int, action="append", help="Mode n (repeatable)")
    trace.add_argument("--sign", type=int, choices=[1, -1], help="Sign of the cos nt seed")
    trace.add_argument("--jobs", type=int, help="Parallel traces")
    trace.set_defaults(handler=cmd_trace)

    switch = subparsers.add_parser("switch", parents=[common], help="Switch onto a secondary branch")
    switch.add_argument("branch_file", help="Host branch file")
    switch.add_argument("--event", type=int, required=True, help="Index into the host's event list")
    switch.add_argument("--sign", type=int, choices=[1, -1], help="Perturbation sign tried first")
    switch.set_defaults(handler=cmd_switch)

    recon = subparsers.add_parser("reconstruct", parents=[common], help="Recover the wave profile")
    recon.add_argument("branch_file", help="Branch file")
    recon.add_argument("--point", default="last", help="index | last | fold:<k> | mu:<value>")
    recon.set_defaults(handler=cmd_reconstruct)

    bifdiag = subparsers.add_parser("bifdiag", parents=[common], help="Export (mu, ||v||) series")
    bifdiag.add_argument("branch_files", nargs="*", help="Branch files")
    bifdiag.add_argument("--output", default="bifdiag.csv", help="CSV file name inside --out")
    bifdiag.set_defaults(handler=cmd_bifdiag)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "handler", None):
        parser.print_help()
        return 1

    status = 1
    try:
        status = args.handler(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        status = 1
    except BabenkoError as exc:
        emit_event("error", str(exc), level="error", stage=args.command)
        status = 2
    finally:
        emit_event("run_end", f"{args.command} finished with status {status}", stage=args.command)
        set_status("completed" if status == 0 else "error")
        flush_events()
    return status


if __name__ == "__main__":
    sys.exit(main())

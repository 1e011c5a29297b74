"""
Tests for the babenko-waves command line (babenko_waves/cli.py).
"""

import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from babenko_waves.cli import main, select_point
from babenko_waves.continuation import ContinuationConfig, TraceOutcome, trace_branch
from babenko_waves.io_branch import read_branch
from babenko_waves.models import BranchEvent, EventKind
from babenko_waves.spectral import OperatorParams, SpectralGrid

SMALL = ["--N", "16", "--max-N", "16", "--step", "0.002", "--max-step", "0.005"]


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def traced(out):
    assert main(["trace", "--r", "0.8", "--mode", "1", "--max-amplitude", "0.02", "--out", str(out)] + SMALL) == 0
    return out / "branch_r0.8_n1.json"


@pytest.fixture
def trivial(out):
    assert main(["trace", "--r", "0.8", "--mode", "1", "--max-amplitude", "0", "--out", str(out), "--N", "16"]) == 0
    return out / "branch_r0.8_n1.json"


class TestSpectrum:
    def test_prints_table_and_writes_csv(self, out, capsys):
        assert main(["spectrum", "--r", "0.8", "--n-max", "3", "--format", "csv", "--out", str(out)]) == 0
        assert "Primary bifurcation points" in capsys.readouterr().out
        rows = list(csv.reader((out / "spectrum_r0.8.csv").open()))
        assert rows[0] == ["n", "mu_n", "lambda_n", "beta_n"]
        assert len(rows) == 4
        assert float(rows[1][1]) == pytest.approx(0.36 / 1.64, abs=1e-14)
        r6 = 0.8**6
        assert float(rows[3][1]) == pytest.approx((1 - r6) / (1 + r6) / 3, abs=1e-14)

    def test_invalid_radius(self, out, capsys):
        assert main(["spectrum", "--r", "1.5", "--out", str(out)]) == 1
        assert "Config validation failed" in capsys.readouterr().err


class TestTrace:
    def test_writes_branch_file(self, traced):
        branch_file = read_branch(traced)
        assert branch_file.header["r"] == 0.8
        assert branch_file.header["config"]["N"] == 16
        assert branch_file.records[-1]["amplitude"] == pytest.approx(0.02, abs=1e-12)

    def test_zero_amplitude_gives_single_trivial_record(self, trivial):
        branch_file = read_branch(trivial)
        assert len(branch_file.records) == 1
        assert branch_file.records[0]["amplitude"] == 0.0
        assert np.all(np.array(branch_file.records[0]["coeffs"]) == 0.0)

    def test_grid_of_traces(self, out):
        args = ["trace", "--r", "0.8,0.5", "--mode", "1", "--mode", "2", "--max-amplitude", "0.01", "--jobs", "2"]
        assert main(args + ["--out", str(out), "--format", "csv"] + SMALL) == 0
        for r in ("0.8", "0.5"):
            for n in (1, 2):
                assert (out / f"branch_r{r}_n{n}.json").exists()
                assert (out / f"branch_r{r}_n{n}.csv").exists()

    def test_journal_written(self, traced, out):
        runs = list((out / "runs").iterdir())
        assert len(runs) == 1
        events = [json.loads(line) for line in (runs[0] / "events.jsonl").read_text().splitlines()]
        types = {e["event_type"] for e in events}
        assert {"run_start", "trace_start", "point_accepted", "termination", "export", "run_end"} <= types
        state = json.loads((runs[0] / "state.json").read_text())
        assert state["status"] == "completed"
        assert state["counters"]["branches_written"] == 1

    def test_stalled_trace_exits_2(self, out, monkeypatch):
        branch = trace_branch(
            1, OperatorParams(0.8), ContinuationConfig(max_amplitude=0.01, max_modes=16), SpectralGrid(16)
        )
        last = branch.last
        stalled = replace(
            branch,
            events=[e for e in branch.events if not e.kind.is_termination]
            + [BranchEvent(len(branch) - 1, EventKind.TERMINATION_NO_CONVERGENCE, last.mu, last.amplitude, {"reason": "step underflow"})],
        )
        monkeypatch.setattr(
            "babenko_waves.cli.trace_many",
            lambda requests, config, jobs=1: [TraceOutcome(request, stalled) for request in requests],
        )
        assert main(["trace", "--r", "0.8", "--mode", "1", "--out", str(out)] + SMALL) == 2
        assert (out / "branch_r0.8_n1.json").exists()
        run = next((out / "runs").iterdir())
        assert json.loads((run / "state.json").read_text())["status"] == "error"
        events = [json.loads(line) for line in (run / "events.jsonl").read_text().splitlines()]
        assert any(e["event_type"] == "error" and "stalled" in e["message"] for e in events)

    def test_bad_radius_list(self, out):
        assert main(["trace", "--r", "0.8,abc", "--out", str(out)]) == 1

    def test_unrepresentable_mode_is_user_error(self, out):
        assert main(["trace", "--r", "0.8", "--mode", "20", "--out", str(out)] + SMALL) == 1


class TestReconstruct:
    def test_trivial_point_is_flat(self, trivial, out):
        assert main(["reconstruct", str(trivial), "--point", "0", "--out", str(out), "--samples", "64"]) == 0
        report = json.loads((out / "branch_r0.8_n1_p0_report.json").read_text())
        assert report["h"] == pytest.approx(-np.log(0.8), abs=1e-14)
        assert report["crest"] == 0.0
        rows = list(csv.reader((out / "branch_r0.8_n1_p0_surface.csv").open()))
        assert rows[0] == ["t", "x", "y"]
        assert all(float(row[2]) == 0.0 for row in rows[1:])

    def test_last_point(self, traced, out):
        assert main(["reconstruct", str(traced), "--out", str(out)] + SMALL) == 0
        index = len(read_branch(traced).records) - 1
        report = json.loads((out / f"branch_r0.8_n1_p{index}_report.json").read_text())
        assert report["checks"]["bottom_monotone"]
        assert report["minus_b0"] == pytest.approx(report["B"], abs=1e-8)
        for piece in ("surface", "bottom", "side"):
            assert (out / f"branch_r0.8_n1_p{index}_{piece}.csv").exists()

    def test_point_out_of_range(self, traced, out):
        assert main(["reconstruct", str(traced), "--point", "999", "--out", str(out)]) == 1

    def test_missing_file(self, out):
        assert main(["reconstruct", str(out / "absent.json"), "--out", str(out)]) == 1


class TestSelectPoint:
    def test_selectors(self, traced):
        branch_file = read_branch(traced)
        n = len(branch_file.records)
        assert select_point(branch_file, "last") == n - 1
        assert select_point(branch_file, "-1") == n - 1
        assert select_point(branch_file, "0") == 0
        target = branch_file.records[2]["mu"]
        assert select_point(branch_file, f"mu:{target}") == 2

    def test_bad_selectors(self, traced):
        branch_file = read_branch(traced)
        with pytest.raises(ValueError):
            select_point(branch_file, "fold:0")
        with pytest.raises(ValueError):
            select_point(branch_file, "nonsense")


class TestSwitch:
    def test_invalid_event_index(self, traced, out):
        assert main(["switch", str(traced), "--event", "7", "--out", str(out)]) == 1

    def test_event_must_be_secondary(self, traced, out, capsys):
        assert main(["switch", str(traced), "--event", "0", "--out", str(out)]) == 1
        assert "not a secondary bifurcation" in capsys.readouterr().err

    def test_writes_both_sides(self, out):
        trace = ["trace", "--r", "0", "--mode", "2", "--N", "64", "--max-N", "64", "--out", str(out)]
        assert main(trace) in (0, 2)
        host = out / "branch_r0_n2.json"
        events = read_branch(host).events
        index = next(i for i, e in enumerate(events) if e["kind"] == EventKind.SECONDARY_BIFURCATION.value)
        switch = ["switch", str(host), "--event", str(index), "--max-points", "15", "--out", str(out)]
        assert main(switch + ["--N", "64", "--max-N", "64"]) == 0
        plus = read_branch(out / f"branch_r0_n2_switch{index}.json")
        minus = read_branch(out / f"branch_r0_n2_switch{index}_neg.json")
        assert plus.header["host"]["sign"] == 1
        assert minus.header["host"]["sign"] == -1
        assert minus.header["host"]["event"] == index


class TestBifdiag:
    def test_empty_input_writes_header_only(self, out):
        assert main(["bifdiag", "--out", str(out)]) == 0
        assert (out / "bifdiag.csv").read_text() == "series,mu,vinf\n"

    def test_series_and_bound(self, traced, out):
        assert main(["bifdiag", str(traced), "--out", str(out), "--output", "diag.csv"]) == 0
        rows = list(csv.DictReader((out / "diag.csv").open()))
        series = {row["series"] for row in rows}
        assert series == {"branch_r0.8_n1", "bound"}
        for row in rows:
            if row["series"] == "bound":
                assert float(row["vinf"]) == pytest.approx(0.5 * float(row["mu"]))
            else:
                assert float(row["vinf"]) <= 0.5 * float(row["mu"])
        branch_mus = {float(r["mu"]) for r in rows if r["series"] != "bound"}
        bound_mus = [float(r["mu"]) for r in rows if r["series"] == "bound"]
        assert len(bound_mus) == len(branch_mus) == len(read_branch(traced).records)
        assert bound_mus == sorted(branch_mus)

    def test_version_mismatch(self, traced, out):
        data = json.loads(traced.read_text())
        data["header"]["format_version"] = "0.9"
        traced.write_text(json.dumps(data))
        assert main(["bifdiag", str(traced), "--out", str(out)]) == 1


class TestUsage:
    def test_no_command(self, capsys):
        assert main([]) == 1

    def test_usage_error_exits_1(self):
        with pytest.raises(SystemExit) as e:
            main(["trace", "--mode", "not-an-int"])
        assert e.value.code == 1

    def test_switch_requires_event(self, traced):
        with pytest.raises(SystemExit) as e:
            main(["switch", str(traced)])
        assert e.value.code == 1

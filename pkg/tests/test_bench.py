from __future__ import annotations

import csv
import io
import math

import pytest

from mmstream.bench import (
    AGGREGATE_COLUMNS,
    NAIVE,
    REPORT_COLUMNS,
    BenchReport,
    ReportRow,
    check_report,
    optimize_query,
    phase_sets,
    run_benchmark,
)
from mmstream.config import BenchConfig
from mmstream.datagen import make_stream, sample_stream

SMALL = BenchConfig(queries=("Q6", "Q8", "Q12"), seeds=(0,), run_frames=600, sample_frames=300)


@pytest.fixture(scope="module")
def small_report() -> BenchReport:
    return run_benchmark(SMALL, check_costs=True)


def test_phase_sets() -> None:
    assert phase_sets(("semantic", "logical", "physical")) == [
        ("none", ()), ("S", ("semantic",)), ("S+L", ("semantic", "logical")),
        ("S+L+P", ("semantic", "logical", "physical"))]
    assert phase_sets(("physical", "semantic")) == [("none", ()), ("S", ("semantic",)), ("S+P", ("semantic", "physical"))]
    assert phase_sets(()) == [("none", ())]


def test_optimize_query_keeps_every_phase() -> None:
    stream = make_stream(SMALL.stream_config("tollbooth", 0))
    sample, _ = sample_stream(stream, 300)
    opt = optimize_query("Q8", stream, sample, ("semantic", "logical", "physical"), SMALL.load_catalog(), SMALL)
    assert list(opt.plans) == ["none", "S", "S+L", "S+L+P"]
    assert opt.plans["none"] == opt.naive and opt.final == opt.plans["S+L+P"]
    assert opt.semantic is not None and opt.semantic.passed
    assert "Skip" in opt.plans["S"].ops()
    # the cheap pixel filter goes in front of the first model call
    assert opt.plans["S+L"].ops()[1:6] == ["Skip", "Crop", "Downscale", "Filter", "Extract"]
    assert all("@" in label for label in opt.final.labels() if label.startswith("Extract"))


def test_report_rows(small_report: BenchReport) -> None:
    assert small_report.phase_labels == ["none", "S", "S+L", "S+L+P"]
    assert len(small_report.rows) == 3 * 4
    assert not any(r.error for r in small_report.rows)
    for r in small_report.rows:
        if r.phase_set == NAIVE:
            assert r.speedup_vs_naive == 1.0 and r.relative_accuracy == 1.0
    q8_naive = next(r for r in small_report.rows if r.query_id == "Q8" and r.phase_set == NAIVE)
    assert q8_naive.fps == pytest.approx(6.25)


def test_csv_layout(small_report: BenchReport, tmp_path) -> None:
    rows = list(csv.reader(io.StringIO(small_report.report_csv())))
    assert tuple(rows[0]) == REPORT_COLUMNS and len(rows) == 13
    agg = list(csv.reader(io.StringIO(small_report.aggregate_csv())))
    assert tuple(agg[0]) == AGGREGATE_COLUMNS and [r[0] for r in agg[1:]] == ["S", "S+L", "S+L+P"]
    report, ablation = small_report.write(tmp_path / "out")
    assert report.read_text() == small_report.report_csv()
    assert ablation.read_text() == small_report.aggregate_csv()
    assert "S+L+P" in small_report.table()


def test_cost_checks_recorded(small_report: BenchReport) -> None:
    assert [q for q, _, _ in small_report.cost_checks] == ["Q6", "Q8", "Q12"]
    for _, est, measured in small_report.cost_checks:
        assert est > 0 and measured > 0


def test_checks_on_a_partial_report(small_report: BenchReport) -> None:
    results = {c.name: c for c in check_report(small_report)}
    assert results["no_errors"].passed
    assert "q8_anchor" in results and "accuracy" in results
    assert str(results["no_errors"]).startswith("PASS no_errors")


def test_failures_become_error_rows(monkeypatch) -> None:
    import mmstream.bench as bench

    def boom(*args, **kwargs):
        raise RuntimeError("reasoner exploded")

    monkeypatch.setattr(bench, "optimize_query", boom)
    report = run_benchmark(BenchConfig(queries=("Q6",), seeds=(0,), run_frames=300, sample_frames=300))
    assert len(report.rows) == 4 and all("reasoner exploded" in r.error for r in report.rows)
    assert all(math.isnan(r.fps) for r in report.rows)
    assert report.aggregates() == []
    assert not {c.name: c for c in check_report(report)}["no_errors"].passed
    assert ",,,," in report.report_csv()  # NaN cells are left empty


def test_per_query_uses_seed_means() -> None:
    rows = [ReportRow("Q1", "none", 1.0, 1.0, 0.8, 1.0, 0), ReportRow("Q1", "none", 1.0, 1.0, 1.0, 1.0, 1),
            ReportRow("Q1", "S", 2.0, 2.0, 0.9, 1.125, 0), ReportRow("Q1", "S", 4.0, 4.0, 0.9, 0.9, 1)]
    pq = BenchReport(rows, ["none", "S"]).per_query("S")
    assert pq["Q1"] == pytest.approx((3.0, 1.0))

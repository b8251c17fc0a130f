"""Benchmark harness: optimize every query phase by phase, run, and report."""
from __future__ import annotations

import csv
import io
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .config import PHASES, BenchConfig
from .datagen import StreamEvent, make_stream
from .executor import ExecConfig, compile, query_accuracy, run
from .logical import apply_logical
from .models import ModelCatalog
from .physical import estimate_cost, select_models
from .plan import Plan, build_query, query_dataset
from .semantic import Reasoner, SemanticOutcome, make_reasoner, semantic_search

__all__ = [
    "ReportRow",
    "AggregateRow",
    "BenchReport",
    "CheckResult",
    "OptimizationResult",
    "phase_sets",
    "optimize_query",
    "run_benchmark",
    "check_report",
    "REPORT_COLUMNS",
    "AGGREGATE_COLUMNS",
    "TARGET_AVG_SPEEDUP",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("query_id", "phase_set", "fps", "speedup_vs_naive", "accuracy", "relative_accuracy", "seed", "error")
AGGREGATE_COLUMNS = ("phase_set", "min_speedup", "avg_speedup", "max_speedup", "mean_relative_accuracy",
                     "min_relative_accuracy", "mean_accuracy_drop")
PHASE_INITIAL = {"semantic": "S", "logical": "L", "physical": "P"}
NAIVE = "none"

# cumulative average speedups the calibration aims for, and the accepted band
TARGET_AVG_SPEEDUP = {"S": 4.8, "S+L": 7.3, "S+L+P": 7.4}
TARGET_TOLERANCE = 0.30
TARGET_MIN_FULL = 1.9 * (1 - TARGET_TOLERANCE)
TARGET_MAX_FULL = 8.0
Q8_NAIVE_FPS = 6.25
Q8_SPEEDUP_BAND = (7.0, 12.0)
MAX_ACCURACY_DROP = 0.10
EPS = 1e-9


def phase_sets(phases: Sequence[str]) -> list[tuple[str, tuple[str, ...]]]:
    """Cumulative phase sets in the fixed order, starting with the naive plan."""
    ordered = [p for p in PHASES if p in phases]
    out = [(NAIVE, ())]
    for i in range(1, len(ordered) + 1):
        chosen = tuple(ordered[:i])
        out.append(("+".join(PHASE_INITIAL[p] for p in chosen), chosen))
    return out


# --------------------------------------------------------------------------- optimization


@dataclass
class OptimizationResult:
    query_id: str
    naive: Plan
    plans: dict[str, Plan]  # phase-set label -> plan, cumulative
    semantic: SemanticOutcome | None = None
    physical_trace: list = field(default_factory=list)

    @property
    def final(self) -> Plan:
        return list(self.plans.values())[-1]


def optimize_query(
    query_id: str,
    stream,
    sample: Sequence[StreamEvent],
    phases: Sequence[str],
    catalog: ModelCatalog,
    config: BenchConfig,
    exec_config: ExecConfig | None = None,
    reasoner: Reasoner | None = None,
) -> OptimizationResult:
    """Apply the enabled phases cumulatively, keeping the plan after each one."""
    exec_config = exec_config or config.exec
    naive = build_query(query_id, config)
    result = OptimizationResult(query_id, naive, {NAIVE: naive})
    plan = naive
    for label, chosen in phase_sets(phases)[1:]:
        phase = chosen[-1]
        if phase == "semantic":
            result.semantic = semantic_search(
                plan, stream, reasoner or make_reasoner(**_reasoner_kwargs(config)),
                config.tau, catalog, exec_config, sample=sample,
            )
            plan = result.semantic.plan
        elif phase == "logical":
            plan = apply_logical(plan, sample)
        else:
            plan = select_models(plan, catalog, config.tau, sample, exec_config,
                                 naive_plan=naive, trace=result.physical_trace)
        result.plans[label] = plan
    return result


def _reasoner_kwargs(config: BenchConfig) -> dict:
    r = config.reasoner
    return {"mode": r.mode, "endpoint": r.endpoint, "timeout_ms": r.timeout_ms}


# --------------------------------------------------------------------------- report


@dataclass(frozen=True)
class ReportRow:
    query_id: str
    phase_set: str
    fps: float
    speedup_vs_naive: float
    accuracy: float
    relative_accuracy: float
    seed: int
    error: str = ""

    def cells(self) -> list[str]:
        return [self.query_id, self.phase_set, _fmt(self.fps), _fmt(self.speedup_vs_naive),
                _fmt(self.accuracy), _fmt(self.relative_accuracy), str(self.seed), self.error]


@dataclass(frozen=True)
class AggregateRow:
    phase_set: str
    min_speedup: float
    avg_speedup: float
    max_speedup: float
    mean_relative_accuracy: float
    min_relative_accuracy: float

    @property
    def mean_accuracy_drop(self) -> float:
        return 1.0 - self.mean_relative_accuracy

    def cells(self) -> list[str]:
        return [self.phase_set, _fmt(self.min_speedup), _fmt(self.avg_speedup), _fmt(self.max_speedup),
                _fmt(self.mean_relative_accuracy), _fmt(self.min_relative_accuracy),
                _fmt(self.mean_accuracy_drop)]


def _fmt(x: float) -> str:
    return "" if x is None or math.isnan(x) else f"{x:.4f}"


@dataclass
class BenchReport:
    rows: list[ReportRow]
    phase_labels: list[str]
    plans: dict[tuple[str, int], OptimizationResult] = field(default_factory=dict)
    cost_checks: list[tuple[str, float, float]] = field(default_factory=list)  # (query, estimated, measured)

    def per_query(self, phase_set: str) -> dict[str, tuple[float, float]]:
        """query -> (mean speedup over seeds, relative accuracy of seed-mean accuracies)."""
        out = {}
        for q in dict.fromkeys(r.query_id for r in self.rows):
            mine = [r for r in self.rows if r.query_id == q and r.phase_set == phase_set and not r.error]
            naive = [r for r in self.rows if r.query_id == q and r.phase_set == NAIVE and not r.error]
            if not mine or not naive:
                continue
            acc = statistics.fmean(r.accuracy for r in mine)
            base = statistics.fmean(r.accuracy for r in naive)
            out[q] = (statistics.fmean(r.speedup_vs_naive for r in mine), acc / max(base, EPS))
        return out

    def aggregates(self) -> list[AggregateRow]:
        out = []
        for label in self.phase_labels[1:]:
            pq = self.per_query(label)
            if not pq:
                continue
            sp = [v[0] for v in pq.values()]
            ra = [v[1] for v in pq.values()]
            out.append(AggregateRow(label, min(sp), statistics.fmean(sp), max(sp), statistics.fmean(ra), min(ra)))
        return out

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for a in self.aggregates():
            w.writerow(a.cells())
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'phases':<8}{'min':>8}{'avg':>8}{'max':>8}{'acc drop':>10}"]
        for a in self.aggregates():
            lines.append(f"{a.phase_set:<8}{a.min_speedup:>8.2f}{a.avg_speedup:>8.2f}{a.max_speedup:>8.2f}"
                         f"{100 * a.mean_accuracy_drop:>9.1f}%")
        return "\n".join(lines)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report, agg = out / "report.csv", out / "ablation.csv"
        report.write_text(self.report_csv(), encoding="utf-8")
        agg.write_text(self.aggregate_csv(), encoding="utf-8")
        return report, agg


def _load_events(config: BenchConfig, domain: str, seed: int) -> tuple[object, list[StreamEvent]]:
    stream = make_stream(config.stream_config(domain, seed))
    events = []
    for ev in stream:
        events.append(ev)
        if len(events) >= max(config.run_frames, config.sample_frames):
            break
    return stream, events


def run_benchmark(
    config: BenchConfig,
    progress: Callable[[str], None] | None = None,
    check_costs: bool = False,
) -> BenchReport:
    """Every query x seed x cumulative phase set: optimize on the sample, run, record a row."""
    catalog = config.load_catalog()
    labels = [label for label, _ in phase_sets(config.phases)]
    report = BenchReport([], labels)
    reasoner = make_reasoner(**_reasoner_kwargs(config))
    for seed in config.seeds:
        exec_cfg = config.exec_for(seed)
        streams: dict[str, tuple[object, list[StreamEvent]]] = {}
        for q in config.queries:
            domain = query_dataset(q)
            if domain not in streams:
                streams[domain] = _load_events(config, domain, seed)
            stream, events = streams[domain]
            sample = events[: config.sample_frames]
            frames = events[: config.run_frames]
            try:
                opt = optimize_query(q, stream, sample, config.phases, catalog, config, exec_cfg, reasoner)
            except Exception as exc:  # recorded, not raised: one bad query must not sink the report
                log.exception("optimizing %s (seed %d) failed", q, seed)
                report.rows += [ReportRow(q, lab, math.nan, math.nan, math.nan, math.nan, seed,
                                          f"optimize: {exc}") for lab in labels]
                continue
            report.plans[(q, seed)] = opt
            naive_ms = naive_acc = None
            for label in labels:
                plan = opt.plans[label]
                try:
                    outputs, m = run(compile(plan, catalog, exec_cfg), frames)
                    acc = query_accuracy(outputs, m.truths, q, plan, exec_cfg)
                except Exception as exc:
                    log.exception("running %s %s (seed %d) failed", q, label, seed)
                    report.rows.append(ReportRow(q, label, math.nan, math.nan, math.nan, math.nan, seed,
                                                 f"run: {exc}"))
                    continue
                if label == NAIVE:
                    naive_ms, naive_acc = m.ms_per_frame, acc
                speedup = naive_ms / m.ms_per_frame if naive_ms and m.ms_per_frame else math.nan
                rel = acc / max(naive_acc, EPS) if naive_acc is not None else math.nan
                report.rows.append(ReportRow(q, label, m.fps, speedup, acc, rel, seed))
                if check_costs and label == labels[-1]:
                    est = estimate_cost(plan, catalog, sample, exec_cfg).expected_ms_per_frame
                    report.cost_checks.append((q, est, m.ms_per_frame))
            if progress:
                last = report.rows[-1]
                progress(f"seed {seed} {q}: {last.phase_set} {last.speedup_vs_naive:.2f}x "
                         f"acc {last.accuracy:.3f}")
    return report


# --------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __str__(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_report(report: BenchReport, tau: float = 0.9) -> list[CheckResult]:
    """Acceptance checks that can be read off a benchmark report."""
    out: list[CheckResult] = []
    aggs = {a.phase_set: a for a in report.aggregates()}
    full = report.phase_labels[-1]

    q8 = [r for r in report.rows if r.query_id == "Q8" and not r.error]
    if q8 and full == "S+L+P":
        fps = statistics.fmean(r.fps for r in q8 if r.phase_set == NAIVE)
        sp = statistics.fmean(r.speedup_vs_naive for r in q8 if r.phase_set == full)
        ok = abs(fps - Q8_NAIVE_FPS) <= 0.05 * Q8_NAIVE_FPS and Q8_SPEEDUP_BAND[0] <= sp <= Q8_SPEEDUP_BAND[1]
        out.append(CheckResult("q8_anchor", ok, f"naive {fps:.2f} fps, optimized {sp:.2f}x"))

    if set(TARGET_AVG_SPEEDUP) <= set(aggs):
        avgs = [aggs[k].avg_speedup for k in TARGET_AVG_SPEEDUP]
        monotone = all(a <= b + EPS for a, b in zip(avgs, avgs[1:]))
        bands = all(abs(aggs[k].avg_speedup - t) <= TARGET_TOLERANCE * t for k, t in TARGET_AVG_SPEEDUP.items())
        f = aggs["S+L+P"]
        ok = monotone and bands and f.min_speedup >= TARGET_MIN_FULL - EPS and f.max_speedup >= TARGET_MAX_FULL
        detail = ", ".join(f"{k} avg {aggs[k].avg_speedup:.2f}" for k in TARGET_AVG_SPEEDUP)
        out.append(CheckResult("speedup_trend", ok, f"{detail}; full min {f.min_speedup:.2f} max {f.max_speedup:.2f}"))

    if full in aggs:
        a = aggs[full]
        ok = a.mean_accuracy_drop <= MAX_ACCURACY_DROP + EPS and a.min_relative_accuracy >= tau - EPS
        out.append(CheckResult("accuracy", ok, f"mean drop {100 * a.mean_accuracy_drop:.1f}%, "
                                               f"min relative {a.min_relative_accuracy:.3f}"))
        slow = [q for label in report.phase_labels[1:] for q, (sp, _) in report.per_query(label).items()
                if sp < 0.95]
        out.append(CheckResult("no_slowdown", not slow, f"queries below 0.95x: {sorted(set(slow)) or 'none'}"))

    errors = [r for r in report.rows if r.error]
    out.append(CheckResult("no_errors", not errors, f"{len(errors)} failed runs"))
    return out

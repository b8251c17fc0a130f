"""``mmstream`` command line: optimize, run, bench, ablate, datagen dump.

Exit codes: 0 success, 1 configuration or input error, 2 a failed check in
``bench --check``.
"""
from __future__ import annotations

import argparse
import csv
import difflib
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .bench import check_report, optimize_query, run_benchmark
from .config import PHASES, BenchConfig, ConfigError, load_config
from .datagen import dump_stream, make_stream, sample_stream
from .executor import compile, query_accuracy, run
from .models import ModelCatalog, ModelError
from .plan import PlanError, QUERY_IDS, deserialize_plan, query_dataset, serialize_plan

log = logging.getLogger("mmstream")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2
METRICS_COLUMNS = ("query_id", "plan_variant", "fps", "accuracy", "frames", "simulated_ms", "outputs")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="benchmark config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--out", help="output directory (or file, for run)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mmstream", description="Offline optimizer and benchmark for multimodal stream queries.")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", parents=[common], help="optimize one query and write naive + optimized plans")
    o.add_argument("--query", required=True)
    o.add_argument("--phases", default=",".join(PHASES), help="comma-separated subset of semantic,logical,physical")

    r = sub.add_parser("run", parents=[common], help="run a plan file over a generated stream")
    r.add_argument("--plan", required=True)
    r.add_argument("--stream", choices=("tollbooth", "volleyball"))
    r.add_argument("--frames", type=int)
    r.add_argument("--catalog")
    r.add_argument("--variant", help="plan_variant column value (default: plan file stem)")

    b = sub.add_parser("bench", parents=[common], help="all queries x cumulative phase sets x seeds")
    b.add_argument("--check", action="store_true", help="exit 2 unless every acceptance check passes")
    b.add_argument("--queries", help="comma-separated query ids")

    a = sub.add_parser("ablate", parents=[common], help="min/avg/max speedup per cumulative phase set")
    a.add_argument("--queries", help="comma-separated query ids")

    d = sub.add_parser("datagen", help="synthetic stream utilities")
    dsub = d.add_subparsers(dest="datagen_command", required=True)
    dd = dsub.add_parser("dump", parents=[common], help="write PPM frames and annotations")
    dd.add_argument("--stream", choices=("tollbooth", "volleyball"), required=True)
    dd.add_argument("--frames", type=int, default=100)
    return p


def _config(args: argparse.Namespace) -> BenchConfig:
    cfg = load_config(args.config)
    changes: dict = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if getattr(args, "out", None) and args.command in ("optimize", "bench", "ablate"):
        changes["out_dir"] = args.out
    if getattr(args, "queries", None):
        changes["queries"] = tuple(q.strip() for q in args.queries.split(",") if q.strip())
    return replace(cfg, **changes) if changes else cfg


def cmd_optimize(args: argparse.Namespace) -> int:
    if args.query not in QUERY_IDS:
        raise ConfigError(f"unknown query {args.query!r}; valid ids: {', '.join(QUERY_IDS)}")
    phases = tuple(p.strip() for p in args.phases.split(",") if p.strip())
    cfg = _config(args)
    cfg = replace(cfg, phases=phases)  # validates the phase names
    seed = cfg.seeds[0]
    catalog = cfg.load_catalog()
    stream = make_stream(cfg.stream_config(query_dataset(args.query), seed))
    sample, _ = sample_stream(stream, cfg.sample_frames)
    opt = optimize_query(args.query, stream, sample, cfg.phases, catalog, cfg, cfg.exec_for(seed))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    naive_path = out / f"{args.query}.naive.json"
    opt_path = out / f"{args.query}.optimized.json"
    naive_path.write_text(serialize_plan(opt.naive), encoding="utf-8")
    opt_path.write_text(serialize_plan(opt.final), encoding="utf-8")

    prev_label, prev = "none", opt.naive
    for label, plan in list(opt.plans.items())[1:]:
        print(f"--- {prev_label} -> {label}")
        diff = list(difflib.unified_diff(prev.labels(), plan.labels(), lineterm="", n=0))[2:]
        print("\n".join(line for line in diff if not line.startswith("@@")) or "  (no change)")
        prev_label, prev = label, plan
    if opt.semantic is not None:
        for name, res in opt.semantic.attempts:
            verdict = "pass" if res.passed else "fail"
            print(f"validation [{name}]: relative accuracy {res.relative_accuracy:.3f} ({verdict})")
    for kind, what, res in opt.physical_trace:
        if kind == "no_gain":
            print(f"physical: {what} kept baseline models (estimated cost {res[0]:.2f} -> {res[1]:.2f} ms)")
        else:
            print(f"physical {kind} {what}: relative accuracy {res.relative_accuracy:.3f}")
    print(f"optimized: {opt.final.describe()}")
    print(f"wrote {naive_path} and {opt_path}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    try:
        plan = deserialize_plan(Path(args.plan).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read plan {args.plan}: {exc}") from None
    domain = args.stream or query_dataset(plan.metadata.query_id)
    catalog = ModelCatalog.load(args.catalog) if args.catalog else cfg.load_catalog()
    seed = cfg.seeds[0]
    frames = args.frames or cfg.run_frames
    if frames < 1:
        raise ConfigError("--frames must be >= 1")
    stream_cfg = replace(cfg.stream_config(domain, seed), duration_frames=frames)
    meta = stream_cfg.metadata()
    exec_cfg = cfg.exec_for(seed)
    outputs, m = run(compile(plan, catalog, exec_cfg, (meta["height"], meta["width"])), make_stream(stream_cfg), frames)
    acc = query_accuracy(outputs, m.truths, plan.metadata.query_id, plan, exec_cfg)
    row = [plan.metadata.query_id, args.variant or Path(args.plan).stem, f"{m.fps:.4f}", f"{acc:.4f}",
           str(m.frames_ingested), f"{m.simulated_ms_total:.3f}", str(len(outputs))]
    out = Path(args.out or "metrics.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        w.writerow(row)
    print(f"{plan.metadata.query_id}: {m.fps:.2f} fps, accuracy {acc:.3f}, {len(outputs)} outputs -> {out}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = run_benchmark(cfg, progress=(lambda s: log.info(s)))
    report_path, agg_path = report.write(cfg.out_dir)
    print(report.table())
    print(f"wrote {report_path} and {agg_path}")
    if args.check:
        results = check_report(report, cfg.tau)
        for r in results:
            print(r)
        if not all(r.passed for r in results):
            return EXIT_CHECK
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = run_benchmark(cfg, progress=(lambda s: log.info(s)))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(report.aggregate_csv(), encoding="utf-8")
    print(report.table())
    print(f"wrote {out / 'ablation.csv'}")
    return EXIT_OK


def cmd_datagen(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    stream = make_stream(cfg.stream_config(args.stream, cfg.seeds[0]))
    out = Path(args.out or f"{cfg.out_dir}/{args.stream}")
    ann = dump_stream(stream, args.frames, out)
    print(f"wrote {args.frames} frames and {ann}")
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "run": cmd_run, "bench": cmd_bench, "ablate": cmd_ablate,
            "datagen": cmd_datagen}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, PlanError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

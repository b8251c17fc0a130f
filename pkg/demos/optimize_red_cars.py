"""Walk one query (red cars whose plate starts with a prefix) through each
optimization phase and compare simulated throughput and accuracy.

    python3 demos/optimize_red_cars.py
"""
from mmstream import BenchConfig, compile, default_catalog, make_stream, query_accuracy, run, sample_stream
from mmstream.bench import optimize_query
from mmstream.plan import query_dataset

QUERY = "Q8"


def main() -> None:
    cfg = BenchConfig(queries=(QUERY,), seeds=(0,), run_frames=3000)
    catalog = default_catalog()
    stream = make_stream(cfg.stream_config(query_dataset(QUERY), 0))
    sample, summary = sample_stream(stream, cfg.sample_frames)
    print(f"sampled {len(sample)} frames; {summary.empty_fraction:.0%} of them without a car\n")

    opt = optimize_query(QUERY, stream, sample, cfg.phases, catalog, cfg, cfg.exec_for(0))
    events = list(stream)[: cfg.run_frames]
    naive_fps = None
    for label, plan in opt.plans.items():
        outputs, m = run(compile(plan, catalog, cfg.exec_for(0)), events)
        acc = query_accuracy(outputs, m.truths, QUERY, plan, cfg.exec_for(0))
        naive_fps = naive_fps or m.fps
        print(f"[{label}] {m.fps:6.2f} fps ({m.fps / naive_fps:4.1f}x)  accuracy {acc:.3f}")
        print(f"    {plan.describe()}")

    if opt.semantic is not None:
        print("\nsemantic validation trace:")
        for name, res in opt.semantic.attempts:
            print(f"    {name}: relative accuracy {res.relative_accuracy:.3f} ({'pass' if res.passed else 'fail'})")
    print("\nmodel selection trace:")
    for kind, what, res in opt.physical_trace:
        detail = f"{res[0]:.1f} -> {res[1]:.1f} ms" if kind == "no_gain" else f"relative accuracy {res.relative_accuracy:.3f}"
        print(f"    {kind} {what}: {detail}")


if __name__ == "__main__":
    main()

from __future__ import annotations

import pytest

from mmstream.datagen import TollBoothConfig, gen_tollbooth
from mmstream.executor import (
    CompileError,
    ExecConfig,
    OutputEvent,
    compile,
    output_set,
    query_accuracy,
    reference_outputs,
    resolve_region,
    run,
    run_plan,
)
from mmstream.models import ModelCatalog
from mmstream.pixels import Region
from mmstream.plan import QUERY_IDS, TOLLBOOTH_QUERIES, PlanError, build_query, insert_node, replace_node


def _with(plan, op: str, params: dict, before: str = "Extract"):
    return insert_node(plan, (op, params), before=plan.find(before)[0].id)


def test_naive_q8_costs_ingest_plus_three_mllm_calls(toll_events, catalog: ModelCatalog) -> None:
    outputs, m = run(compile(build_query("Q8"), catalog), toll_events)
    assert m.frames_ingested == m.frames_admitted == len(toll_events)
    assert m.ms_per_frame == pytest.approx(16.0 + 3 * 48.0)
    assert m.fps == pytest.approx(6.25)
    assert sum(m.per_operator_us.values()) == m.simulated_us_total
    assert m.per_operator_ms["Source"] == pytest.approx(16.0 * len(toll_events))


def test_max_frames_and_empty_stream(toll_events, catalog: ModelCatalog) -> None:
    _, m = run(compile(build_query("Q1"), catalog), toll_events, max_frames=10)
    assert m.frames_ingested == 10
    with pytest.raises(ValueError):
        run(compile(build_query("Q1"), catalog), toll_events, max_frames=0)
    _, empty = run(compile(build_query("Q1"), catalog), [])
    assert empty.fps == 0.0 and empty.ms_per_frame == 0.0


def test_compile_rejects_invalid_plans(catalog: ModelCatalog) -> None:
    plan = build_query("Q8")
    skip = _with(plan, "Skip", {"amount": 3, "condition": "no_car"})
    bad = replace_node(skip, skip.find("Skip")[0].id, {"amount": -2, "condition": "no_car"})
    with pytest.raises(CompileError, match="negative skip"):
        compile(bad, catalog)
    ext = plan.find("Extract")[0]
    unknown = replace_node(plan, ext.id, {**ext.params, "model_slot": "nope"})
    with pytest.raises(Exception, match="nope"):
        compile(unknown, catalog)


def test_resolve_region() -> None:
    assert resolve_region({"side": "bottom", "fraction": 0.5}, 240, 320) == Region(120, 240, 0, 320)
    assert resolve_region({"side": "left", "fraction": 0.25}, 240, 320) == Region(0, 240, 0, 80)
    assert resolve_region({"rows": [0, 10], "cols": [4, 8]}, 240, 320) == Region(0, 10, 4, 8)


def test_reductions_shrink_model_inputs_and_cost(toll_events, catalog: ModelCatalog) -> None:
    plan = build_query("Q1")
    crop = _with(plan, "Crop", {"region": {"side": "bottom", "fraction": 0.5}})
    down = _with(crop, "Downscale", {"factor": 2})
    stage = next(s for s in compile(down, catalog).stages if s.op == "Extract")
    assert stage.view.region == Region(120, 240, 0, 320) and stage.view.scale == 2
    _, m_plain = run(compile(plan, catalog), toll_events[:200])
    _, m_small = run(compile(down, catalog), toll_events[:200])
    assert m_small.simulated_us_total < m_plain.simulated_us_total


def test_perfect_models_give_perfect_accuracy(toll_events, volley_events, catalog: ModelCatalog) -> None:
    perfect = catalog.perfect()
    for q in QUERY_IDS:
        events = toll_events if q in TOLLBOOTH_QUERIES else volley_events
        plan = build_query(q)
        outputs, m = run(compile(plan, perfect), events)
        assert query_accuracy(outputs, m.truths, q, plan) == pytest.approx(1.0), q


def test_reference_outputs_match_perfect_run(toll_events, catalog: ModelCatalog) -> None:
    plan = build_query("Q5")
    outputs, m = run(compile(plan, catalog.perfect()), toll_events)
    ref, _ = reference_outputs(plan, m.truths)
    assert output_set(outputs) == output_set(ref)


def test_skip_drops_frames_after_empty_ones(toll_events, catalog: ModelCatalog) -> None:
    plan = _with(build_query("Q1"), "Skip", {"amount": 3, "condition": "no_car"})
    outputs, m = run(compile(plan, catalog.perfect()), toll_events)
    assert m.frames_skipped > 0
    assert m.frames_admitted + m.frames_skipped == m.frames_ingested == len(toll_events)
    assert query_accuracy(outputs, m.truths, "Q1", plan) == 1.0  # every car is still seen


def test_skip_never_crosses_window_boundaries(catalog: ModelCatalog) -> None:
    # car-free stream, 1 s windows at 30 fps, and a skip long enough to span several windows
    events = list(gen_tollbooth(TollBoothConfig(seed=1, duration_frames=300, arrival_rate=0.01)))
    assert not any(ev.truth.car_present for ev in events)
    plan = build_query("Q6")
    w = plan.find("Window")[0]
    plan = replace_node(plan, w.id, {**w.params, "size_ms": 1000})
    skip = _with(plan, "Skip", {"amount": 100, "condition": "no_car"})
    _, m = run(compile(skip, catalog.perfect()), events)
    assert m.frames_admitted == 10  # exactly the first frame of each window
    assert m.frames_skipped == 290
    _, m = run(compile(_with(build_query("Q1"), "Skip", {"amount": 100, "condition": "no_car"}),
                       catalog.perfect()), events)
    assert m.frames_admitted == 3  # frames 0, 101, 202 without windows


def test_notify_deduplicates_a_tracked_object(toll_events, catalog: ModelCatalog) -> None:
    outputs, m = run(compile(build_query("Q3"), catalog.perfect()), toll_events)
    cars = {t.car_id for _, _, t in m.truths if t.car_present}
    assert all(isinstance(o, OutputEvent) and o.key is not None for o in outputs)
    assert len(outputs) == len(cars)


def test_run_plan_fills_accuracy(toll_stream, catalog: ModelCatalog) -> None:
    _, m = run_plan(build_query("Q2"), catalog, toll_stream, max_frames=300)
    assert m.accuracy is not None and 0.8 <= m.accuracy <= 1.0


def test_mock_errors_are_paired_between_plans(toll_events, catalog: ModelCatalog) -> None:
    cfg = ExecConfig(seed=4)
    a, _ = run(compile(build_query("Q2"), catalog, cfg), toll_events)
    b, _ = run(compile(build_query("Q2"), catalog, cfg), toll_events)
    c, _ = run(compile(build_query("Q2"), catalog, ExecConfig(seed=5)), toll_events)
    assert a == b
    assert output_set(a) != output_set(c)


def test_query_accuracy_unknown_query() -> None:
    with pytest.raises(PlanError):
        query_accuracy([], [], "Q42")

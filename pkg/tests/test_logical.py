from __future__ import annotations

import random

import pytest

from mmstream.executor import compile, output_set, run
from mmstream.logical import (
    MIN_POSITIVES,
    add_presence_guard,
    apply_logical,
    derive_cheap_filter,
    extract_costs,
    rule_crop_before_downscale,
    split_conjunctive_filter,
)
from mmstream.pixels import red_fraction
from mmstream.plan import (
    And,
    Comparison,
    PixelFractionGE,
    PrefixMatch,
    build_query,
    conjuncts,
    insert_node,
    validate_plan,
)
from plan_gen import random_plan


def _q8_pred():
    return build_query("Q8").find("Filter")[0].params["predicate"]


def test_split_orders_conjuncts_by_producer_cost() -> None:
    out = split_conjunctive_filter(build_query("Q8"))
    assert out.ops() == ["Source", "Extract", "Filter", "Extract", "Extract", "Filter", "Sink"]
    filters = [n.params["predicate"] for n in out.find("Filter")]
    assert filters == [Comparison("color", "=", "red"), PrefixMatch("plate", "MTT")]
    assert validate_plan(out).ok


def test_split_uses_given_costs() -> None:
    plan = build_query("Q8")
    costs = extract_costs(plan)
    assert set(costs.values()) == {48.0}
    color, _, text = [n.id for n in plan.find("Extract")]
    # pretend OCR is the cheap one: the prefix test must still wait for its producer
    out = split_conjunctive_filter(plan, {**costs, text: 1.0, color: 100.0})
    assert validate_plan(out).ok and len(out.find("Filter")) == 2


def test_presence_guard_only_for_aggregates() -> None:
    assert add_presence_guard(build_query("Q8")) == build_query("Q8")
    q4 = add_presence_guard(build_query("Q4"))
    assert q4.ops() == ["Source", "Extract", "Filter", "Extract", "Window", "Aggregate", "Sink"]
    assert q4.find("Filter")[0].params["predicate"] == Comparison("color", "!=", "none")
    assert add_presence_guard(q4) == q4
    assert add_presence_guard(build_query("Q6")) == build_query("Q6")  # a single Extract gains nothing


def test_crop_before_downscale_scales_pixel_regions() -> None:
    plan = insert_node(build_query("Q1"), ("Downscale", {"factor": 2}), before=1)
    plan = insert_node(plan, ("Crop", {"region": {"rows": [60, 120], "cols": [0, 160]}}), before=2)
    out = rule_crop_before_downscale(plan)
    assert out.ops()[:3] == ["Source", "Crop", "Downscale"]
    assert out.find("Crop")[0].params["region"] == {"rows": [120, 240], "cols": [0, 320]}
    assert rule_crop_before_downscale(out) == out


def test_crop_before_downscale_keeps_symbolic_regions() -> None:
    plan = insert_node(build_query("Q1"), ("Downscale", {"factor": 4}), before=1)
    plan = insert_node(plan, ("Crop", {"region": {"side": "bottom", "fraction": 0.5}}), before=2)
    out = rule_crop_before_downscale(plan)
    assert out.find("Crop")[0].params["region"] == {"side": "bottom", "fraction": 0.5}
    assert out.ops()[:3] == ["Source", "Crop", "Downscale"]


def test_rewritten_crop_downscale_feeds_identical_pixels(toll_events, catalog) -> None:
    plan = insert_node(build_query("Q2"), ("Downscale", {"factor": 2}), before=1)
    plan = insert_node(plan, ("Crop", {"region": {"rows": [60, 120], "cols": [0, 160]}}), before=2)
    before, after = compile(plan, catalog), compile(rule_crop_before_downscale(plan), catalog)
    view = lambda pipe: next(s.view for s in pipe.stages if s.op == "Extract")  # noqa: E731
    assert view(before) == view(after)
    a, ma = run(before, toll_events[:300])
    b, mb = run(after, toll_events[:300])
    assert a == b and ma.simulated_us_total == mb.simulated_us_total


def test_cheap_filter_calibration(toll_events) -> None:
    node, cal = derive_cheap_filter(_q8_pred(), toll_events)
    assert node is not None and cal.reason == "ok"
    pred = node.params["predicate"]
    assert isinstance(pred, PixelFractionGE) and pred.color_class == "red"
    assert pred.threshold == pytest.approx(0.5 * cal.min_fraction, abs=1e-6)
    positives = [ev for ev in toll_events if ev.truth.car_present and ev.truth.color == "red"]
    assert len(positives) == cal.positives >= MIN_POSITIVES
    assert all(red_fraction(ev.frame) >= pred.threshold for ev in positives)


def test_cheap_filter_declines_without_evidence(toll_events) -> None:
    assert derive_cheap_filter(Comparison("color", "=", "blue"), toll_events)[0] is None  # no pixel classifier
    assert derive_cheap_filter(PrefixMatch("plate", "MTT"), toll_events)[0] is None
    node, cal = derive_cheap_filter(_q8_pred(), toll_events[:30])
    assert node is None and "positive frames" in cal.reason


def test_apply_logical_q8(toll_events) -> None:
    out = apply_logical(build_query("Q8"), toll_events)
    assert out.ops() == ["Source", "Filter", "Extract", "Filter", "Extract", "Extract", "Filter", "Sink"]
    assert isinstance(out.find("Filter")[0].params["predicate"], PixelFractionGE)
    assert any("pre-filter" in r for r in out.metadata.rewrites)


@pytest.mark.parametrize("qid", ["Q1", "Q3", "Q4", "Q5", "Q7", "Q8", "Q9"])
def test_apply_logical_preserves_outputs_with_perfect_models(qid: str, toll_events, catalog) -> None:
    perfect = catalog.perfect()
    plan = build_query(qid)
    a, _ = run(compile(plan, perfect), toll_events)
    b, _ = run(compile(apply_logical(plan, toll_events), perfect), toll_events)
    assert output_set(a) == output_set(b)


def test_apply_logical_is_idempotent_on_random_plans(toll_events) -> None:
    rng = random.Random(7)
    for _ in range(60):
        plan = random_plan(rng)
        once = apply_logical(plan, toll_events)
        assert validate_plan(once).ok
        assert apply_logical(once, toll_events) == once


def test_nested_conjunctions_split_fully() -> None:
    plan = build_query("Q8")
    f = plan.find("Filter")[0]
    nested = And((Comparison("color", "=", "red"), And((PrefixMatch("plate", "MTT"), Comparison("brand", "=", "fiat")))))
    from mmstream.plan import replace_node

    out = split_conjunctive_filter(replace_node(plan, f.id, {"predicate": nested}))
    assert sorted(len(conjuncts(n.params["predicate"])) for n in out.find("Filter")) == [1, 1, 1]

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmstream.plan import (
    DEFAULT_WINDOWS_MS,
    QUERY_IDS,
    And,
    Comparison,
    PixelFractionGE,
    Plan,
    PlanError,
    PlanMetadata,
    PlanNode,
    PrefixMatch,
    build_query,
    conjuncts,
    deserialize_plan,
    insert_node,
    predicate_from_dict,
    query_dataset,
    remove_node,
    replace_node,
    serialize_plan,
    validate_plan,
)
from plan_gen import random_plan


def _md(qid: str = "Q1") -> PlanMetadata:
    return PlanMetadata(qid, "test", 0.9)


def test_all_benchmark_queries_build_valid_plans() -> None:
    for q in QUERY_IDS:
        plan = build_query(q)
        assert validate_plan(plan).ok, (q, validate_plan(plan).violations)
        assert plan.ops()[0] == "Source" and plan.ops()[-1] == "Sink"
        assert plan.metadata.query_id == q


def test_q8_naive_plan_shape() -> None:
    plan = build_query("Q8")
    assert plan.ops() == ["Source", "Extract", "Extract", "Extract", "Filter", "Sink"]
    pred = plan.find("Filter")[0].params["predicate"]
    assert conjuncts(pred) == [Comparison("color", "=", "red"), PrefixMatch("plate", "MTT")]


def test_query_windows_come_from_config() -> None:
    class Cfg:
        windows_ms = {"toll": 60_000}
        tau = 0.8

    plan = build_query("Q5", Cfg())
    assert plan.find("Window")[0].params["size_ms"] == 60_000
    assert plan.metadata.accuracy_threshold == 0.8
    assert build_query("Q7").find("Window")[0].params["size_ms"] == DEFAULT_WINDOWS_MS["toll_long"]


def test_unknown_query_lists_valid_ids() -> None:
    with pytest.raises(PlanError, match="Q13"):
        build_query("Q99")
    assert query_dataset("Q3") == "tollbooth"
    assert query_dataset("Q11") == "volleyball"


def test_predicates_evaluate() -> None:
    row = {"color": "red", "plate": "MTT1A23", "player_id": 4}
    assert Comparison("color", "=", "red").evaluate(row)
    assert not Comparison("color", "!=", "red").evaluate(row)
    assert Comparison("player_id", ">=", 4).evaluate(row) and not Comparison("player_id", "<", 4).evaluate(row)
    assert not Comparison("missing", "=", None).evaluate(row)
    assert PrefixMatch("plate", "MTT").evaluate(row) and not PrefixMatch("color", "MTT").evaluate(row)
    both = And((Comparison("color", "=", "red"), And((PrefixMatch("plate", "MT"),))))
    assert both.evaluate(row)
    assert len(conjuncts(both)) == 2
    assert both.attributes() == {"color", "plate"}


def test_predicate_dict_errors() -> None:
    with pytest.raises(PlanError):
        predicate_from_dict({"kind": "regex"})
    with pytest.raises(PlanError):
        predicate_from_dict({"kind": "comparison", "attribute": "color"})


def test_round_trip_of_benchmark_plans() -> None:
    for q in QUERY_IDS:
        plan = build_query(q).add_rewrite("semantic: Skip(3, no_car)")
        text = serialize_plan(plan)
        assert deserialize_plan(text) == plan
        assert serialize_plan(deserialize_plan(text)) == text


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_plans_round_trip(seed: int) -> None:
    plan = random_plan(random.Random(seed))
    assert validate_plan(plan).ok, validate_plan(plan).violations
    text = serialize_plan(plan)
    assert deserialize_plan(text) == plan
    assert serialize_plan(deserialize_plan(text)) == text


@pytest.mark.parametrize(
    ("doc", "message"),
    [
        ("{not json", "malformed"),
        ("[]", "top level"),
        ('{"metadata": {"query_id": "Q1"}}', "missing nodes"),
        ('{"nodes": []}', "missing metadata"),
        ('{"version": 7, "nodes": [], "metadata": {"query_id": "Q1"}}', "version"),
        ('{"nodes": [{"id": 0, "op": "Teleport"}], "metadata": {"query_id": "Q1"}}', "unknown op"),
        ('{"nodes": [{"id": 0, "op": "Source"}, {"id": 0, "op": "Sink"}], "metadata": {"query_id": "Q1"}}',
         "duplicate"),
    ],
)
def test_deserialize_errors(doc: str, message: str) -> None:
    with pytest.raises(PlanError, match=message):
        deserialize_plan(doc)


def test_validate_reports_structural_problems() -> None:
    base = build_query("Q8")
    skip = insert_node(base, ("Skip", {"amount": 3, "condition": "no_car"}), before=1)
    neg = replace_node(skip, 1, {"amount": -1, "condition": "no_car"})
    assert "negative skip amount" in validate_plan(neg).codes()

    unbound = Plan.from_chain(
        [("Source", {}), ("Filter", {"predicate": Comparison("color", "=", "red")}), ("Sink", {"mode": "collect"})],
        _md(),
    )
    assert "unbound attribute" in validate_plan(unbound).codes()

    two_sinks = Plan(base.nodes + (PlanNode(99, "Sink", {}, (0,)),), base.metadata)
    assert "sink count" in validate_plan(two_sinks).codes()

    cyclic = Plan((PlanNode(0, "Source"), PlanNode(1, "Filter", {"predicate": Comparison("a", "=", 1)}, (2,)),
                   PlanNode(2, "Sink", {}, (1,))), _md())
    assert "cycle" in validate_plan(cyclic).codes()

    no_window = Plan.from_chain(
        [("Source", {}), ("Extract", {"task": "color_recognition"}),
         ("Aggregate", {"fn": "count", "group_by": ["color"]}), ("Sink", {})], _md())
    assert not validate_plan(no_window).ok

    grey_on_text = Plan.from_chain(
        [("Source", {}), ("Extract", {"task": "text_extraction"}), ("Downscale", {"factor": 2}),
         ("Sink", {"mode": "notify", "key": ["plate"]})], _md())
    assert validate_plan(grey_on_text).ok  # frame still flows past the Extract

    bad_kind = Plan.from_chain(
        [("Source", {}), ("Extract", {"task": "color_recognition"}),
         ("Filter", {"predicate": PrefixMatch("frame_id", "1")}), ("Sink", {})], _md())
    assert "kind mismatch" in validate_plan(bad_kind).codes()


def test_validate_rejects_bad_params() -> None:
    cases = [
        ("Downscale", {"factor": 0}),
        ("Crop", {"region": {"side": "middle", "fraction": 0.5}}),
        ("Crop", {"region": {"rows": [5, 2], "cols": [0, 4]}}),
        ("Filter", {"predicate": PixelFractionGE("red", 1.5)}),
        ("Skip", {"amount": 2, "condition": "always"}),
    ]
    for op, params in cases:
        plan = Plan.from_chain([("Source", {}), (op, params), ("Extract", {"task": "object_detection"}),
                                ("Sink", {"mode": "notify", "key": ["brand"]})], _md())
        assert not validate_plan(plan).ok, (op, params)


def test_insert_remove_replace() -> None:
    plan = build_query("Q8")
    first_extract = plan.find("Extract")[0].id
    with_skip = insert_node(plan, ("Skip", {"amount": 3, "condition": "no_car"}), before=first_extract)
    assert with_skip.ops()[:2] == ["Source", "Skip"]
    assert [n.id for n in with_skip.topological()] == list(range(len(with_skip.nodes)))
    assert remove_node(with_skip, with_skip.find("Skip")[0].id) == plan
    bigger = replace_node(with_skip, with_skip.find("Skip")[0].id, {"amount": 5, "condition": "no_car"})
    assert bigger.find("Skip")[0].label == "Skip(5, no_car)"
    with pytest.raises(PlanError):
        remove_node(plan, 0)


def test_insert_reports_unbound_attribute() -> None:
    plan = build_query("Q8")
    with pytest.raises(PlanError, match="unbound attribute plate"):
        insert_node(plan, ("Filter", {"predicate": PrefixMatch("plate", "MTT")}), before=1)


def test_rewrite_notes_are_not_duplicated() -> None:
    plan = build_query("Q1").add_rewrite("a").add_rewrite("a").add_rewrite("b")
    assert plan.metadata.rewrites == ("a", "b")


def test_labels_show_bound_models() -> None:
    plan = build_query("Q6")
    ext = plan.find("Extract")[0]
    bound = replace_node(plan, ext.id, {**ext.params, "model_slot": "colorcv"})
    assert "Extract(color_recognition @ colorcv)" in bound.labels()
    assert "Extract(color_recognition)" in plan.labels()


def test_serialization_is_plain_json() -> None:
    doc = json.loads(serialize_plan(build_query("Q8")))
    assert doc["version"] == 1
    assert doc["nodes"][4]["params"]["predicate"]["kind"] == "and"

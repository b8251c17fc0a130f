"""Relational rewrite rules over multimodal plans.

Images are treated as a relation of pixel tuples ``(row_id, column_id, red,
green, blue)``.  Under that view a crop is a selection on the key columns and
a downscale is a grouped average, so the usual pushdown arguments apply:

* :func:`rule_crop_before_downscale` moves a selection below an aggregation
  (exact: the crop region is scaled to whole blocks).
* :func:`split_conjunctive_filter` splits ``AND`` filters and places each part
  right after the extraction that produces its attribute (exact).
* :func:`derive_cheap_filter` turns a color predicate on an extracted attribute
  into a pixel-level test on the raw image, kept in front of the exact filter
  (conservative: it may let extra frames through but drops no true match).

:func:`apply_logical` runs the rules in a fixed order and is idempotent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .datagen import StreamEvent
from .models import ModelCatalog, default_catalog
from .pixels import Region, red_mask
from .plan import (
    TASK_OUTPUTS,
    Comparison,
    PixelFractionGE,
    Plan,
    PlanNode,
    _renumber,
    conjuncts,
    insert_node,
    remove_node,
    validate_plan,
)

__all__ = [
    "RewriteRule",
    "CheapFilterCalibration",
    "rule_crop_before_downscale",
    "split_conjunctive_filter",
    "add_presence_guard",
    "derive_cheap_filter",
    "apply_logical",
    "extract_costs",
    "MIN_POSITIVES",
    "SAFETY_MARGIN",
    "USELESS_THRESHOLD",
    "RULES",
]

log = logging.getLogger(__name__)

MIN_POSITIVES = 20
SAFETY_MARGIN = 0.5  # threshold = margin x smallest positive fraction
USELESS_THRESHOLD = 0.005
# colors whose pixels the red-ish classifier recognizes
PIXEL_CLASSES = {"red": "red"}
PRESENCE_GUARDS = {
    "object_detection": Comparison("car_present", "=", True),
    "color_recognition": Comparison("color", "!=", "none"),
    "text_extraction": Comparison("plate", "!=", ""),
}


@dataclass(frozen=True)
class RewriteRule:
    name: str
    safety: str  # "exact" | "conservative" | "validated"
    apply: Callable[..., Plan]


def _producer(plan: Plan) -> dict[str, int]:
    """Attribute -> id of the Extract that first produces it."""
    out: dict[str, int] = {}
    for n in plan.topological():
        if n.op == "Extract":
            for attr, _ in TASK_OUTPUTS[n.params["task"]]:
                out.setdefault(attr, n.id)
    return out


def extract_costs(plan: Plan, catalog: ModelCatalog | None = None) -> dict[int, float]:
    """Per-call latency (ms) of each Extract under its bound or baseline model."""
    catalog = catalog or default_catalog()
    out = {}
    for n in plan.nodes:
        if n.op == "Extract":
            slot = n.params.get("model_slot", "auto")
            model = catalog.baseline(n.params["task"]) if slot == "auto" else catalog.get(slot)
            out[n.id] = model.latency_ms
    return out


# --------------------------------------------------------------------------- crop / downscale


def rule_crop_before_downscale(plan: Plan) -> Plan:
    """``Downscale(b) -> Crop(R)`` becomes ``Crop(R scaled by b) -> Downscale(b)``.

    A region given in downscaled pixels maps to whole b x b blocks of the
    input, so the rewrite is pixel-exact.  Symbolic regions (a side and a
    fraction) are resolution independent and move unchanged.
    """
    changed = True
    while changed:
        changed = False
        for n in plan.topological():
            if n.op != "Downscale":
                continue
            nxt = plan.consumers(n.id)
            if len(nxt) != 1 or nxt[0].op != "Crop":
                continue
            crop_node = nxt[0]
            b = int(n.params["factor"])
            region = crop_node.params["region"]
            if "side" not in region:
                r = Region.from_dict(region).scaled(b).aligned_outward(b)
                region = r.to_dict()
            # swap the two nodes in place
            nodes = []
            for m in plan.nodes:
                if m.id == n.id:
                    nodes.append(PlanNode(m.id, "Crop", {**crop_node.params, "region": region}, m.inputs))
                elif m.id == crop_node.id:
                    nodes.append(PlanNode(m.id, "Downscale", dict(n.params), m.inputs))
                else:
                    nodes.append(m)
            plan = _renumber(nodes, plan.metadata).add_rewrite("logical: crop before downscale")
            changed = True
            break
    return plan


# --------------------------------------------------------------------------- filter split / pushdown


def split_conjunctive_filter(plan: Plan, cost_estimates: Mapping[int, float] | None = None) -> Plan:
    """Split ``AND`` filters and push each conjunct to just after its producing Extract.

    Conjuncts that land after the same Extract are ordered by the cost of the
    Extract that produces them (cheapest first), then by their original
    position.  Pixel predicates are left in place.
    """
    for n in plan.topological():
        if n.op != "Filter":
            continue
        parts = conjuncts(n.params["predicate"])
        if len(parts) < 2 or any(isinstance(c, PixelFractionGE) for c in parts):
            continue
        costs = cost_estimates or extract_costs(plan)
        producer = _producer(plan)
        order = sorted(
            range(len(parts)),
            key=lambda i: (costs.get(producer.get(next(iter(parts[i].attributes())), -1), 0.0), i),
        )
        out = remove_node(plan, n.id)
        for i in order:
            c = parts[i]
            anchor = _anchor_after_producer(out, c)
            out = insert_node(out, ("Filter", {"predicate": c}), before=anchor)
        return split_conjunctive_filter(out.add_rewrite("logical: split conjunctive filter"), cost_estimates)
    return plan


def _anchor_after_producer(plan: Plan, pred) -> int:
    """Node id before which a filter on ``pred`` should be inserted."""
    producer = _producer(plan)
    ids = [producer[a] for a in pred.attributes() if a in producer]
    order = [m.id for m in plan.topological()]
    if not ids:
        return plan.consumers(order[0])[0].id
    last = max(ids, key=order.index)
    # skip over filters already sitting right after the producer
    cur = plan.consumers(last)[0]
    while cur.op == "Filter" and not any(isinstance(c, PixelFractionGE) for c in conjuncts(cur.params["predicate"])):
        cur = plan.consumers(cur.id)[0]
    return cur.id


def push_filters_down(plan: Plan) -> Plan:
    """Move single attribute filters up to the Extract that produces their attribute."""
    changed = True
    while changed:
        changed = False
        order = plan.topological()
        producer = _producer(plan)
        for n in order:
            if n.op != "Filter":
                continue
            pred = n.params["predicate"]
            if any(isinstance(c, PixelFractionGE) for c in conjuncts(pred)):
                continue
            ids = [producer[a] for a in pred.attributes() if a in producer]
            if not ids:
                continue
            pos = {m.id: i for i, m in enumerate(order)}
            target = max(ids, key=pos.get)
            between = order[pos[target] + 1 : pos[n.id]]
            if any(m.op == "Extract" for m in between):
                moved = remove_node(plan, n.id)
                anchor = _anchor_after_producer(moved, pred)
                plan = insert_node(moved, ("Filter", dict(n.params)), before=anchor)
                plan = plan.add_rewrite("logical: filter pushdown")
                changed = True
                break
    return plan


def add_presence_guard(plan: Plan) -> Plan:
    """In aggregate plans, drop object-free frames right after the first presence Extract.

    The sink only counts rows in which an object is present, so filtering on
    presence earlier only saves work for the later extractions (exact).
    """
    if not any(n.op == "Aggregate" for n in plan.nodes):
        return plan
    extracts = [n for n in plan.topological() if n.op == "Extract"]
    first = next((n for n in extracts if n.params["task"] in PRESENCE_GUARDS), None)
    if first is None or extracts[-1].id == first.id:
        return plan
    guard = PRESENCE_GUARDS[first.params["task"]]
    nxt = plan.consumers(first.id)[0]
    if nxt.op == "Filter" and guard in conjuncts(nxt.params["predicate"]):
        return plan
    out = insert_node(plan, ("Filter", {"predicate": guard}), before=nxt.id)
    return out.add_rewrite("logical: presence guard")


# --------------------------------------------------------------------------- cheap filter


@dataclass(frozen=True)
class CheapFilterCalibration:
    color_class: str | None
    threshold: float | None
    positives: int
    min_fraction: float | None
    reason: str = ""


def derive_cheap_filter(
    predicate, sample_events: Sequence[StreamEvent]
) -> tuple[PlanNode | None, CheapFilterCalibration]:
    """Pixel-level pre-filter implied by a color equality, calibrated on the sample.

    The threshold is half the smallest red-ish pixel fraction seen on any
    sample frame whose annotation satisfies the color predicate, so every
    positive sample frame passes with a 2x margin.
    """
    colors = [
        c for c in conjuncts(predicate)
        if isinstance(c, Comparison) and c.attribute == "color" and c.op == "="
    ]
    if not colors:
        return None, CheapFilterCalibration(None, None, 0, None, "no color equality in predicate")
    target = colors[0].literal
    cls = PIXEL_CLASSES.get(target)
    if cls is None:
        return None, CheapFilterCalibration(None, None, 0, None, f"no pixel classifier for {target!r}")
    fractions = [
        float(red_mask(ev.frame.pixels).mean())
        for ev in sample_events
        if ev.truth.car_present and ev.truth.color == target
    ]
    if len(fractions) < MIN_POSITIVES:
        return None, CheapFilterCalibration(cls, None, len(fractions), min(fractions, default=None),
                                            f"only {len(fractions)} positive frames (< {MIN_POSITIVES})")
    lo = min(fractions)
    t = round(SAFETY_MARGIN * lo, 6)
    if t < USELESS_THRESHOLD:
        return None, CheapFilterCalibration(cls, t, len(fractions), lo, f"threshold {t} below {USELESS_THRESHOLD}")
    node = PlanNode(-1, "Filter", {"predicate": PixelFractionGE(cls, t)})
    return node, CheapFilterCalibration(cls, t, len(fractions), lo, "ok")


def _has_pixel_filter(plan: Plan) -> bool:
    return any(
        isinstance(c, PixelFractionGE)
        for n in plan.nodes if n.op == "Filter"
        for c in conjuncts(n.params["predicate"])
    )


def push_cheap_filter(plan: Plan, sample_events: Sequence[StreamEvent]) -> Plan:
    if _has_pixel_filter(plan):
        return plan
    first = next((n for n in plan.topological() if n.op == "Extract"), None)
    if first is None:
        return plan
    for n in plan.topological():
        if n.op != "Filter":
            continue
        node, cal = derive_cheap_filter(n.params["predicate"], sample_events)
        if node is None:
            continue
        out = insert_node(plan, node, before=first.id)
        return out.add_rewrite(
            f"logical: conservative pre-filter {cal.color_class}_fraction >= {cal.threshold:g} "
            f"(calibrated on {cal.positives} positive frames)"
        )
    return plan


RULES = (
    RewriteRule("split_conjunctive_filter", "exact", split_conjunctive_filter),
    RewriteRule("filter_pushdown", "exact", push_filters_down),
    RewriteRule("presence_guard", "exact", add_presence_guard),
    RewriteRule("cheap_filter_pushdown", "conservative", push_cheap_filter),
    RewriteRule("crop_before_downscale", "exact", rule_crop_before_downscale),
)


def apply_logical(
    plan: Plan,
    sample_events: Sequence[StreamEvent],
    cost_estimates: Mapping[int, float] | None = None,
) -> Plan:
    out = split_conjunctive_filter(plan, cost_estimates)
    out = push_filters_down(out)
    out = add_presence_guard(out)
    out = push_cheap_filter(out, sample_events)
    out = rule_crop_before_downscale(out)
    report = validate_plan(out)
    if not report.ok:  # pragma: no cover - every rule validates through insert_node
        log.warning("logical rewrite produced an invalid plan (%s); keeping input", report.violations[0])
        return plan
    return out

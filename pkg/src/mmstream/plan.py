"""Logical plan IR: typed streaming operators, predicates, schema propagation,
validation, JSON (de)serialization and the benchmark query constructors.

Plans are immutable values.  Every transformation returns a new :class:`Plan`
whose node ids are renumbered densely in topological order, so two plans with
the same operator chain compare equal regardless of how they were built.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence, Union

__all__ = [
    "OPS",
    "TASKS",
    "TASK_OUTPUTS",
    "SOURCE_SCHEMA",
    "AttributeSchema",
    "Comparison",
    "PrefixMatch",
    "And",
    "PixelFractionGE",
    "Predicate",
    "predicate_from_dict",
    "conjuncts",
    "PlanNode",
    "PlanMetadata",
    "Plan",
    "PlanError",
    "Violation",
    "ValidationReport",
    "validate_plan",
    "propagate_schemas",
    "serialize_plan",
    "deserialize_plan",
    "insert_node",
    "remove_node",
    "replace_node",
    "QUERY_IDS",
    "TOLLBOOTH_QUERIES",
    "VOLLEYBALL_QUERIES",
    "build_query",
    "query_dataset",
]

OPS = (
    "Source", "Extract", "Filter", "Skip", "Crop",
    "Downscale", "Greyscale", "Window", "Aggregate", "Sink",
)
TASKS = ("object_detection", "color_recognition", "text_extraction", "action_recognition")
KINDS = ("frame", "text", "label", "number", "boolean", "bbox")
AGG_FNS = ("count", "group_count_argmax", "distinct_count", "top_k", "repeated")
SKIP_CONDITIONS = ("no_car", "no_action_change")
CROP_SIDES = ("bottom", "top", "left", "right")
CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")
PLAN_FORMAT_VERSION = 1

SOURCE_SCHEMA = (("frame", "frame"), ("frame_id", "number"), ("event_time", "number"))
TASK_OUTPUTS: dict[str, tuple[tuple[str, str], ...]] = {
    "object_detection": (("car_present", "boolean"), ("bbox", "bbox"), ("brand", "label")),
    "color_recognition": (("color", "label"),),
    "text_extraction": (("plate", "text"),),
    "action_recognition": (("player_id", "number"), ("team", "label"), ("action", "label")),
}


class PlanError(ValueError):
    """Raised for malformed plans, plan documents, or illegal rewrites."""


# --------------------------------------------------------------------------- schema


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        names = [n for n, _ in self.attributes]
        if len(names) != len(set(names)):
            raise PlanError(f"duplicate attribute names in {names}")
        for n, k in self.attributes:
            if k not in KINDS:
                raise PlanError(f"attribute {n!r} has unknown kind {k!r}")

    def kind(self, name: str) -> str | None:
        return dict(self.attributes).get(name)

    def __contains__(self, name: object) -> bool:
        return any(n == name for n, _ in self.attributes)

    def extend(self, extra: Iterable[tuple[str, str]]) -> "AttributeSchema":
        have = dict(self.attributes)
        merged = list(self.attributes)
        for n, k in extra:
            if n not in have:
                merged.append((n, k))
        return AttributeSchema(tuple(merged))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.attributes]


# --------------------------------------------------------------------------- predicates


@dataclass(frozen=True)
class Comparison:
    attribute: str
    op: str
    literal: Any

    def to_dict(self) -> dict:
        return {"kind": "comparison", "attribute": self.attribute, "op": self.op, "literal": self.literal}

    def evaluate(self, row: Mapping[str, Any]) -> bool:
        v = row.get(self.attribute)
        if v is None:
            return False
        lit = self.literal
        op = self.op
        if op == "=":
            return v == lit
        if op == "!=":
            return v != lit
        if op == "<":
            return v < lit
        if op == "<=":
            return v <= lit
        if op == ">":
            return v > lit
        return v >= lit

    def attributes(self) -> set[str]:
        return {self.attribute}


@dataclass(frozen=True)
class PrefixMatch:
    attribute: str
    prefix: str

    def to_dict(self) -> dict:
        return {"kind": "prefix_match", "attribute": self.attribute, "prefix": self.prefix}

    def evaluate(self, row: Mapping[str, Any]) -> bool:
        v = row.get(self.attribute)
        return isinstance(v, str) and v.startswith(self.prefix)

    def attributes(self) -> set[str]:
        return {self.attribute}


@dataclass(frozen=True)
class PixelFractionGE:
    """Cheap raw-image predicate: fraction of pixels of ``color_class`` >= threshold."""

    color_class: str
    threshold: float
    attribute: str = "frame"

    def to_dict(self) -> dict:
        return {
            "kind": "pixel_fraction_ge",
            "attribute": self.attribute,
            "color_class": self.color_class,
            "threshold": self.threshold,
        }

    def attributes(self) -> set[str]:
        return {self.attribute}


@dataclass(frozen=True)
class And:
    children: tuple["Predicate", ...]

    def to_dict(self) -> dict:
        return {"kind": "and", "children": [c.to_dict() for c in self.children]}

    def evaluate(self, row: Mapping[str, Any]) -> bool:
        return all(c.evaluate(row) for c in self.children)  # type: ignore[union-attr]

    def attributes(self) -> set[str]:
        out: set[str] = set()
        for c in self.children:
            out |= c.attributes()
        return out


Predicate = Union[Comparison, PrefixMatch, PixelFractionGE, And]


def predicate_from_dict(d: Mapping[str, Any]) -> Predicate:
    try:
        kind = d["kind"]
        if kind == "comparison":
            return Comparison(d["attribute"], d["op"], d["literal"])
        if kind == "prefix_match":
            return PrefixMatch(d["attribute"], d["prefix"])
        if kind == "pixel_fraction_ge":
            return PixelFractionGE(d["color_class"], float(d["threshold"]), d.get("attribute", "frame"))
        if kind == "and":
            return And(tuple(predicate_from_dict(c) for c in d["children"]))
    except (KeyError, TypeError) as exc:
        raise PlanError(f"malformed predicate {d!r}") from exc
    raise PlanError(f"unknown predicate kind {kind!r}")


def conjuncts(pred: Predicate) -> list[Predicate]:
    """Flatten nested conjunctions."""
    if isinstance(pred, And):
        out: list[Predicate] = []
        for c in pred.children:
            out.extend(conjuncts(c))
        return out
    return [pred]


# --------------------------------------------------------------------------- nodes / plans


@dataclass(frozen=True)
class PlanNode:
    id: int
    op: str
    params: Mapping[str, Any] = field(default_factory=dict)
    inputs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "inputs", tuple(self.inputs))

    def __hash__(self) -> int:
        return hash((self.id, self.op, self.inputs))

    @property
    def label(self) -> str:
        if self.op == "Extract":
            slot = self.params.get("model_slot", "auto")
            bound = "" if slot == "auto" else f" @ {slot}"
            return f"Extract({self.params.get('task')}{bound})"
        if self.op == "Skip":
            return f"Skip({self.params.get('amount')}, {self.params.get('condition')})"
        if self.op == "Downscale":
            return f"Downscale({self.params.get('factor')})"
        if self.op == "Crop":
            r = self.params.get("region", {})
            if "side" in r:
                return f"Crop({r['side']}, {r.get('fraction')})"
            return f"Crop(rows {r.get('rows')}, cols {r.get('cols')})"
        if self.op == "Filter":
            return f"Filter({_pred_str(self.params.get('predicate'))})"
        if self.op == "Aggregate":
            return f"Aggregate({self.params.get('fn')} by {self.params.get('group_by')})"
        return self.op

    def to_dict(self) -> dict:
        params = dict(self.params)
        if isinstance(params.get("predicate"), (Comparison, PrefixMatch, PixelFractionGE, And)):
            params["predicate"] = params["predicate"].to_dict()
        return {"id": self.id, "op": self.op, "params": params, "inputs": list(self.inputs)}


def _pred_str(p: Any) -> str:
    if isinstance(p, Comparison):
        return f"{p.attribute} {p.op} {p.literal!r}"
    if isinstance(p, PrefixMatch):
        return f"prefix({p.attribute}, {p.prefix!r})"
    if isinstance(p, PixelFractionGE):
        return f"{p.color_class}_fraction >= {p.threshold:.4f}"
    if isinstance(p, And):
        return " AND ".join(_pred_str(c) for c in p.children)
    return repr(p)


@dataclass(frozen=True)
class PlanMetadata:
    query_id: str
    description: str = ""
    accuracy_threshold: float = 0.9
    rewrites: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "query_id": self.query_id,
            "description": self.description,
            "accuracy_threshold": self.accuracy_threshold,
        }
        if self.rewrites:
            d["rewrites"] = list(self.rewrites)
        return d


@dataclass(frozen=True)
class Plan:
    nodes: tuple[PlanNode, ...]
    metadata: PlanMetadata

    @classmethod
    def from_chain(cls, ops: Sequence[tuple[str, Mapping[str, Any]]], metadata: PlanMetadata) -> "Plan":
        nodes = tuple(
            PlanNode(i, op, params, (i - 1,) if i else ()) for i, (op, params) in enumerate(ops)
        )
        return cls(nodes, metadata)

    def node(self, node_id: int) -> PlanNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise PlanError(f"no node with id {node_id}")

    @property
    def root(self) -> int:
        sinks = [n.id for n in self.nodes if n.op == "Sink"]
        if len(sinks) != 1:
            raise PlanError(f"plan has {len(sinks)} sinks")
        return sinks[0]

    def topological(self) -> list[PlanNode]:
        order = _topo_order(self.nodes)
        if order is None:
            raise PlanError("plan contains a cycle")
        by_id = {n.id: n for n in self.nodes}
        return [by_id[i] for i in order]

    def consumers(self, node_id: int) -> list[PlanNode]:
        return [n for n in self.nodes if node_id in n.inputs]

    def find(self, op: str, **params: Any) -> list[PlanNode]:
        return [
            n for n in self.topological()
            if n.op == op and all(n.params.get(k) == v for k, v in params.items())
        ]

    def ops(self) -> list[str]:
        return [n.op for n in self.topological()]

    def labels(self) -> list[str]:
        return [n.label for n in self.topological()]

    def with_metadata(self, **changes: Any) -> "Plan":
        return Plan(self.nodes, replace(self.metadata, **changes))

    def add_rewrite(self, note: str) -> "Plan":
        if note in self.metadata.rewrites:
            return self
        return self.with_metadata(rewrites=self.metadata.rewrites + (note,))

    def describe(self) -> str:
        return " -> ".join(self.labels())

    def __str__(self) -> str:
        return f"{self.metadata.query_id}: {self.describe()}"


def _topo_order(nodes: Sequence[PlanNode]) -> list[int] | None:
    ids = {n.id for n in nodes}
    indeg = {n.id: sum(1 for i in n.inputs if i in ids) for n in nodes}
    out: dict[int, list[int]] = {n.id: [] for n in nodes}
    for n in nodes:
        for i in n.inputs:
            if i in out:
                out[i].append(n.id)
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order: list[int] = []
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        for nxt in sorted(out[cur]):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
                ready.sort()
    return order if len(order) == len(nodes) else None


def _renumber(nodes: Sequence[PlanNode], metadata: PlanMetadata) -> Plan:
    order = _topo_order(nodes)
    if order is None:
        raise PlanError("plan contains a cycle")
    mapping = {old: new for new, old in enumerate(order)}
    by_id = {n.id: n for n in nodes}
    renumbered = tuple(
        PlanNode(mapping[old], by_id[old].op, by_id[old].params, tuple(mapping[i] for i in by_id[old].inputs))
        for old in order
    )
    return Plan(renumbered, metadata)


# --------------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    code: str
    node_id: int | None
    message: str
    attribute: str | None = None  # set for binding violations

    def __str__(self) -> str:
        where = f"node {self.node_id}: " if self.node_id is not None else ""
        return f"{where}{self.code}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:  # truthy iff there is something to report
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def _check_params(n: PlanNode) -> list[Violation]:
    p = n.params
    bad = lambda msg: Violation("bad params", n.id, msg)  # noqa: E731
    out: list[Violation] = []
    if n.op == "Skip":
        amt = p.get("amount")
        if not isinstance(amt, int) or isinstance(amt, bool):
            out.append(bad("Skip.amount must be an integer"))
        elif amt < 0:
            out.append(Violation("negative skip amount", n.id, f"Skip.amount = {amt}"))
        if p.get("condition") not in SKIP_CONDITIONS:
            out.append(bad(f"unknown skip condition {p.get('condition')!r}"))
    elif n.op == "Crop":
        r = p.get("region")
        if not isinstance(r, Mapping):
            out.append(bad("Crop.region missing"))
        elif "side" in r:
            f = r.get("fraction")
            if r["side"] not in CROP_SIDES or not isinstance(f, (int, float)) or not 0 < f <= 1:
                out.append(bad(f"invalid symbolic region {dict(r)}"))
        else:
            try:
                from .pixels import Region

                Region.from_dict(r)
            except (KeyError, TypeError, ValueError):
                out.append(bad(f"invalid pixel region {dict(r)}"))
    elif n.op == "Downscale":
        b = p.get("factor")
        if not isinstance(b, int) or isinstance(b, bool) or b < 1:
            out.append(bad(f"Downscale.factor must be an integer >= 1, got {b!r}"))
    elif n.op == "Extract":
        if p.get("task") not in TASKS:
            out.append(bad(f"unknown extraction task {p.get('task')!r}"))
        if not isinstance(p.get("model_slot", "auto"), str):
            out.append(bad("model_slot must be a string"))
    elif n.op == "Window":
        if p.get("kind", "tumbling") != "tumbling":
            out.append(bad("only tumbling windows are supported"))
        size = p.get("size_ms")
        if not isinstance(size, int) or size <= 0:
            out.append(bad(f"Window.size_ms must be a positive integer, got {size!r}"))
    elif n.op == "Aggregate":
        if p.get("fn") not in AGG_FNS:
            out.append(bad(f"unknown aggregate fn {p.get('fn')!r}"))
        if p.get("fn") == "top_k" and (not isinstance(p.get("k"), int) or p["k"] < 1):
            out.append(bad("top_k requires integer k >= 1"))
    elif n.op == "Filter":
        pred = p.get("predicate")
        if not isinstance(pred, (Comparison, PrefixMatch, PixelFractionGE, And)):
            out.append(bad("Filter.predicate missing"))
        else:
            for c in conjuncts(pred):
                if isinstance(c, PixelFractionGE) and not 0.0 <= c.threshold <= 1.0:
                    out.append(bad(f"threshold {c.threshold} outside [0, 1]"))
                if isinstance(c, Comparison) and c.op not in CMP_OPS:
                    out.append(bad(f"unknown comparison {c.op!r}"))
    elif n.op == "Sink":
        if p.get("mode", "collect") not in ("notify", "collect"):
            out.append(bad(f"unknown sink mode {p.get('mode')!r}"))
    return out


def _output_schema(n: PlanNode, schema: AttributeSchema) -> AttributeSchema:
    if n.op == "Source":
        return AttributeSchema(SOURCE_SCHEMA)
    if n.op == "Extract":
        return schema.extend(TASK_OUTPUTS.get(n.params.get("task"), ()))
    if n.op == "Aggregate":
        return schema.extend((("result", "label"),))
    return schema


def _required(n: PlanNode) -> list[tuple[str, str | None]]:
    """Attributes (and required kind, if any) an operator reads from its input."""
    p = n.params
    if n.op in ("Crop", "Downscale", "Greyscale", "Extract"):
        return [("frame", "frame")]
    if n.op == "Filter" and isinstance(p.get("predicate"), (Comparison, PrefixMatch, PixelFractionGE, And)):
        req: list[tuple[str, str | None]] = []
        for c in conjuncts(p["predicate"]):
            if isinstance(c, PixelFractionGE):
                req.append((c.attribute, "frame"))
            elif isinstance(c, PrefixMatch):
                req.append((c.attribute, "text"))
            else:
                req.append((c.attribute, None))
        return req
    if n.op == "Window":
        return [("event_time", "number")]
    if n.op == "Aggregate":
        return [(a, None) for a in list(p.get("group_by", [])) + list(p.get("track_by", []))]
    if n.op == "Sink":
        return [(a, None) for a in list(p.get("key", [])) + list(p.get("track_by", []))]
    return []


def propagate_schemas(plan: Plan) -> tuple[dict[int, AttributeSchema], list[Violation]]:
    """Input schema of every node plus any binding violations found on the way."""
    schemas_in: dict[int, AttributeSchema] = {}
    schemas_out: dict[int, AttributeSchema] = {}
    problems: list[Violation] = []
    order = _topo_order(plan.nodes)
    if order is None:
        return schemas_in, [Violation("cycle", None, "plan contains a cycle")]
    by_id = {n.id: n for n in plan.nodes}
    for nid in order:
        n = by_id[nid]
        ins = [schemas_out[i] for i in n.inputs if i in schemas_out]
        schema = ins[0] if ins else AttributeSchema()
        for extra in ins[1:]:
            schema = schema.extend(extra.attributes)
        schemas_in[nid] = schema
        for name, kind in _required(n):
            have = schema.kind(name)
            if have is None:
                problems.append(Violation("unbound attribute", nid, f"{n.label} reads {name!r}, which is never produced upstream", name))
            elif kind is not None and have != kind:
                problems.append(Violation("kind mismatch", nid, f"{name!r} is {have}, {n.label} needs {kind}", name))
        schemas_out[nid] = _output_schema(n, schema)
    return schemas_in, problems


def validate_plan(plan: Plan) -> ValidationReport:
    out: list[Violation] = []
    ids = [n.id for n in plan.nodes]
    if len(ids) != len(set(ids)):
        out.append(Violation("duplicate node id", None, f"ids {ids}"))
    idset = set(ids)
    sources = [n for n in plan.nodes if n.op == "Source"]
    sinks = [n for n in plan.nodes if n.op == "Sink"]
    if len(sources) != 1:
        out.append(Violation("source count", None, f"expected exactly one Source, found {len(sources)}"))
    if len(sinks) != 1:
        out.append(Violation("sink count", None, f"expected exactly one Sink, found {len(sinks)}"))
    for n in plan.nodes:
        if n.op not in OPS:
            out.append(Violation("unknown op", n.id, f"unknown operator tag {n.op!r}"))
            continue
        want = 0 if n.op == "Source" else 1
        if len(n.inputs) != want:
            out.append(Violation("arity", n.id, f"{n.op} needs {want} input(s), has {len(n.inputs)}"))
        for i in n.inputs:
            if i not in idset:
                out.append(Violation("dangling input", n.id, f"input {i} does not exist"))
        out.extend(_check_params(n))
        if n.op == "Sink" and plan.consumers(n.id):
            out.append(Violation("arity", n.id, "Sink must not have consumers"))
    if _topo_order(plan.nodes) is None:
        out.append(Violation("cycle", None, "plan contains a cycle"))
    else:
        _, problems = propagate_schemas(plan)
        out.extend(problems)
        seen_window = False
        for n in plan.topological():
            if n.op == "Window":
                seen_window = True
            if n.op == "Aggregate" and not seen_window:
                out.append(Violation("bad params", n.id, "Aggregate requires an upstream Window"))
    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------- serialization


def serialize_plan(plan: Plan) -> str:
    doc = {
        "version": PLAN_FORMAT_VERSION,
        "metadata": plan.metadata.to_dict(),
        "nodes": [n.to_dict() for n in sorted(plan.nodes, key=lambda n: n.id)],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def deserialize_plan(text: str) -> Plan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError(f"malformed plan document: {exc}") from exc
    if not isinstance(doc, dict):
        raise PlanError("malformed plan document: top level must be an object")
    if "nodes" not in doc:
        raise PlanError("missing nodes")
    if "metadata" not in doc:
        raise PlanError("missing metadata")
    if doc.get("version", PLAN_FORMAT_VERSION) != PLAN_FORMAT_VERSION:
        raise PlanError(f"unsupported plan version {doc.get('version')!r}")
    md = doc["metadata"]
    try:
        metadata = PlanMetadata(
            query_id=str(md["query_id"]),
            description=str(md.get("description", "")),
            accuracy_threshold=float(md.get("accuracy_threshold", 0.9)),
            rewrites=tuple(md.get("rewrites", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"malformed metadata: {exc}") from exc
    nodes: list[PlanNode] = []
    seen: set[int] = set()
    for raw in doc["nodes"]:
        try:
            nid, op = int(raw["id"]), raw["op"]
            params = dict(raw.get("params", {}))
            inputs = tuple(int(i) for i in raw.get("inputs", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"malformed node {raw!r}") from exc
        if op not in OPS:
            raise PlanError(f"unknown op tag {op!r}")
        if nid in seen:
            raise PlanError(f"duplicate node id {nid}")
        seen.add(nid)
        if "predicate" in params and isinstance(params["predicate"], Mapping):
            params["predicate"] = predicate_from_dict(params["predicate"])
        for key in ("group_by", "track_by", "key"):
            if key in params:
                params[key] = list(params[key])
        nodes.append(PlanNode(nid, op, params, inputs))
    return Plan(tuple(sorted(nodes, key=lambda n: n.id)), metadata)


# --------------------------------------------------------------------------- rewriting primitives


def insert_node(plan: Plan, node: PlanNode | tuple[str, Mapping[str, Any]], before: int) -> Plan:
    """Splice ``node`` onto the single input edge of node ``before``.

    The id of ``node`` is ignored; the result is renumbered.  Raises
    :class:`PlanError` naming the unbound attribute if the insertion breaks
    schema propagation.
    """
    if isinstance(node, tuple):
        node = PlanNode(-1, node[0], node[1])
    target = plan.node(before)
    if len(target.inputs) != 1:
        raise PlanError(f"cannot insert before {target.label}: it has {len(target.inputs)} inputs")
    new_id = max(n.id for n in plan.nodes) + 1
    spliced = PlanNode(new_id, node.op, node.params, target.inputs)
    nodes = [PlanNode(n.id, n.op, n.params, (new_id,)) if n.id == before else n for n in plan.nodes]
    nodes.append(spliced)
    out = _renumber(nodes, plan.metadata)
    _, problems = propagate_schemas(out)
    for v in problems:
        if v.code == "unbound attribute":
            raise PlanError(f"unbound attribute {v.attribute}: {v.message}")
    bad = [v for v in _check_params(spliced)]
    if bad:
        raise PlanError(str(bad[0]))
    return out


def remove_node(plan: Plan, node_id: int) -> Plan:
    """Splice out a single-input node, rewiring its consumers to its input."""
    target = plan.node(node_id)
    if target.op in ("Source", "Sink") or len(target.inputs) != 1:
        raise PlanError(f"cannot remove {target.label}")
    (src,) = target.inputs
    nodes = [
        PlanNode(n.id, n.op, n.params, tuple(src if i == node_id else i for i in n.inputs))
        for n in plan.nodes
        if n.id != node_id
    ]
    return _renumber(nodes, plan.metadata)


def replace_node(plan: Plan, node_id: int, params: Mapping[str, Any], op: str | None = None) -> Plan:
    nodes = [
        PlanNode(n.id, op or n.op, params, n.inputs) if n.id == node_id else n for n in plan.nodes
    ]
    return _renumber(nodes, plan.metadata)


# --------------------------------------------------------------------------- benchmark queries

TOLLBOOTH_QUERIES = tuple(f"Q{i}" for i in range(1, 10))
VOLLEYBALL_QUERIES = tuple(f"Q{i}" for i in range(10, 14))
QUERY_IDS = TOLLBOOTH_QUERIES + VOLLEYBALL_QUERIES

_TOLL_TRACK: list[str] = []
_VOLLEY_TRACK = ["player_id", "action"]

_QUERIES: dict[str, tuple[str, list[str], list[tuple[str, dict]]]] = {
    # id: (description, extraction tasks, tail operators after the extracts)
    "Q1": ("Car brand recognition", ["object_detection"], [
        ("Filter", {"predicate": Comparison("car_present", "=", True)}),
        ("Sink", {"mode": "notify", "key": ["brand"], "track_by": []}),
    ]),
    "Q2": ("Car color recognition", ["color_recognition"], [
        ("Filter", {"predicate": Comparison("color", "!=", "none")}),
        ("Sink", {"mode": "notify", "key": ["color"], "track_by": []}),
    ]),
    "Q3": ("License plate detection", ["object_detection", "text_extraction"], [
        ("Filter", {"predicate": Comparison("car_present", "=", True)}),
        ("Sink", {"mode": "notify", "key": ["plate"], "track_by": []}),
    ]),
    "Q4": ("Most popular brand and color", ["color_recognition", "object_detection"], [
        ("Window", "toll"),
        ("Aggregate", {"fn": "group_count_argmax", "group_by": ["brand", "color"], "track_by": []}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q5": ("Most popular brand", ["color_recognition", "object_detection"], [
        ("Window", "toll"),
        ("Aggregate", {"fn": "group_count_argmax", "group_by": ["brand"], "track_by": []}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q6": ("Most popular color", ["color_recognition"], [
        ("Window", "toll"),
        ("Aggregate", {"fn": "group_count_argmax", "group_by": ["color"], "track_by": []}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q7": ("Repeated car detection", ["object_detection", "text_extraction"], [
        ("Window", "toll_long"),
        ("Aggregate", {"fn": "repeated", "group_by": ["plate"], "track_by": []}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q8": ("Red stolen car with plate prefix MTT", ["color_recognition", "object_detection", "text_extraction"], [
        ("Filter", {"predicate": And((Comparison("color", "=", "red"), PrefixMatch("plate", "MTT")))}),
        ("Sink", {"mode": "notify", "key": ["plate"], "track_by": []}),
    ]),
    "Q9": ("Unique license plates", ["object_detection", "text_extraction"], [
        ("Window", "toll"),
        ("Aggregate", {"fn": "distinct_count", "group_by": ["plate"], "track_by": []}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q10": ("Number of jumping players", ["action_recognition"], [
        ("Filter", {"predicate": Comparison("action", "=", "jump")}),
        ("Window", "volley"),
        ("Aggregate", {"fn": "distinct_count", "group_by": ["player_id"], "track_by": _VOLLEY_TRACK}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q11": ("Most offensive team", ["action_recognition"], [
        ("Filter", {"predicate": Comparison("action", "=", "spike")}),
        ("Window", "volley"),
        ("Aggregate", {"fn": "group_count_argmax", "group_by": ["team"], "track_by": _VOLLEY_TRACK}),
        ("Sink", {"mode": "collect"}),
    ]),
    "Q12": ("Notify when a player spikes", ["action_recognition"], [
        ("Filter", {"predicate": Comparison("action", "=", "spike")}),
        ("Sink", {"mode": "notify", "key": ["player_id"], "track_by": ["player_id"]}),
    ]),
    "Q13": ("Three most common actions", ["action_recognition"], [
        ("Window", "volley"),
        ("Aggregate", {"fn": "top_k", "group_by": ["action"], "k": 3, "track_by": _VOLLEY_TRACK}),
        ("Sink", {"mode": "collect"}),
    ]),
}

DEFAULT_WINDOWS_MS = {"toll": 10_000, "toll_long": 30_000, "volley": 4_000}


def query_dataset(query_id: str) -> str:
    if query_id in TOLLBOOTH_QUERIES:
        return "tollbooth"
    if query_id in VOLLEYBALL_QUERIES:
        return "volleyball"
    raise PlanError(f"unknown query id {query_id!r}; valid ids: {', '.join(QUERY_IDS)}")


def build_query(query_id: str, config: Any = None) -> Plan:
    """Naive plan for benchmark query ``query_id``.

    ``config`` may provide ``windows_ms`` (a mapping overriding
    :data:`DEFAULT_WINDOWS_MS`) and ``tau``.
    """
    query_dataset(query_id)
    description, tasks, tail = _QUERIES[query_id]
    windows = dict(DEFAULT_WINDOWS_MS)
    windows.update(getattr(config, "windows_ms", None) or {})
    tau = float(getattr(config, "tau", 0.9) or 0.9)
    ops: list[tuple[str, Mapping[str, Any]]] = [("Source", {})]
    ops += [("Extract", {"task": t, "model_slot": "auto"}) for t in tasks]
    for op, params in tail:
        if op == "Window":
            ops.append(("Window", {"kind": "tumbling", "size_ms": int(windows[params])}))
        else:
            ops.append((op, dict(params)))
    return Plan.from_chain(ops, PlanMetadata(query_id, description, tau))

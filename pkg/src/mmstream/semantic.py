"""Semantic optimization: world knowledge -> data-reduction operators -> plan update.

A :class:`Reasoner` answers three questions about a query and a stream
sample: what is known about the scene (:class:`Facts`), which reduction
operators are justified (:class:`CandidateOp`), and where they go in the plan
(:class:`Insertion`).  The scripted reasoner answers mechanically from
sample statistics and stream metadata.  The external reasoner asks an HTTP
service and validates every answer, falling back to the scripted reasoner when
the service is unreachable or the answer does not fit the schema.

:func:`semantic_search` then runs the naive and rewritten plans side by side
on the sample and backs rewrites off until the relative accuracy holds.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Literal, Mapping, Protocol, Sequence

import httpx
from pydantic import BaseModel, Field, ValidationError

from .datagen import SampleSummary, StreamEvent, sample_stream
from .executor import ExecConfig, compile, query_accuracy, run
from .kinematics import compute_skip_amount
from .models import TASK_RESOLUTION_FLOOR_PX, ModelCatalog, default_catalog
from .plan import (
    Plan,
    PlanError,
    conjuncts,
    insert_node,
    remove_node,
    replace_node,
    serialize_plan,
    validate_plan,
)

__all__ = [
    "Facts",
    "SpatialPrior",
    "TemporalPrior",
    "Relevance",
    "CandidateOp",
    "Insertion",
    "ValidationResult",
    "SemanticOutcome",
    "Reasoner",
    "ScriptedReasoner",
    "ExternalReasoner",
    "make_reasoner",
    "extract_world_knowledge",
    "select_operators",
    "compute_skip_amount",
    "update_plan",
    "empirical_validate",
    "semantic_search",
    "semantic_optimize",
    "REDUCTION_CATALOG",
    "MAX_REFINEMENTS",
]

log = logging.getLogger(__name__)

REDUCTION_CATALOG = ("Skip", "Crop", "Downscale", "Greyscale")
INSERT_ORDER = {"Skip": 0, "Crop": 1, "Downscale": 2, "Greyscale": 3}
DOWNSCALE_STEPS = (4, 2)
MIN_CROP_CONFIDENCE = 0.99
MAX_REFINEMENTS = 6
EPS = 1e-9
COLOR_ATTRS = {"color"}


# --------------------------------------------------------------------------- facts


@dataclass(frozen=True)
class SpatialPrior:
    region: Mapping[str, Any] | None  # symbolic crop region, e.g. {"side": "bottom", "fraction": 0.5}
    confidence: float


@dataclass(frozen=True)
class TemporalPrior:
    fps: float
    v_max_kmh: float | None
    d_entry_m: float | None
    min_empty_frames: int  # G: how many frames can be dropped after an uninformative one
    condition: str | None  # skip condition matching the stream's continuity guarantee


@dataclass(frozen=True)
class Relevance:
    color_needed: bool
    text_needed: bool
    resolution_floor: Mapping[str, int]  # task -> minimum object height in model-input pixels


@dataclass(frozen=True)
class Facts:
    entities: tuple[tuple[str, Mapping[str, Any]], ...]
    spatial_prior: SpatialPrior
    temporal_prior: TemporalPrior
    relevance: Relevance
    empty_fraction: float
    object_height_min: int

    @property
    def G(self) -> int:  # noqa: N802 - the customary name of the bound
        return self.temporal_prior.min_empty_frames

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["entities"] = [[k, dict(p)] for k, p in self.entities]
        return d


@dataclass(frozen=True)
class CandidateOp:
    op: str
    params: Mapping[str, Any]
    precondition: str
    rationale: str
    accepted: bool

    def to_dict(self) -> dict[str, Any]:
        return {"op": self.op, "params": dict(self.params), "precondition": self.precondition,
                "rationale": self.rationale, "accepted": self.accepted}


@dataclass(frozen=True)
class Insertion:
    op: str
    params: Mapping[str, Any]
    anchor: str  # "after_source" | "before_first_extract"


# --------------------------------------------------------------------------- plan inspection


def _predicates(plan: Plan) -> list:
    return [c for n in plan.nodes if n.op == "Filter" for c in conjuncts(n.params["predicate"])]


def _tasks(plan: Plan) -> list[str]:
    return [n.params["task"] for n in plan.topological() if n.op == "Extract"]


def _color_needed(plan: Plan) -> bool:
    if "color_recognition" in _tasks(plan):
        return True
    if any(c.attributes() & COLOR_ATTRS for c in _predicates(plan)):
        return True
    return any(set(n.params.get("group_by", [])) & COLOR_ATTRS for n in plan.nodes if n.op == "Aggregate")


# --------------------------------------------------------------------------- scripted reasoner


class Reasoner(Protocol):
    mode: str

    def world_knowledge(self, plan: Plan, summary: SampleSummary) -> Facts: ...

    def operator_select(self, facts: Facts, plan: Plan, catalog: Sequence[str]) -> list[CandidateOp]: ...

    def plan_update(self, plan: Plan, candidates: Sequence[CandidateOp]) -> list[Insertion]: ...


class ScriptedReasoner:
    """Deterministic rule-based reasoner."""

    mode = "scripted"

    def world_knowledge(self, plan: Plan, summary: SampleSummary) -> Facts:
        md = summary.metadata
        fps = float(md.get("fps", summary.fps))
        if md.get("domain") == "volleyball":
            # an action lasts at least min_action_frames, so that many minus one
            # frames may follow a frame on which no action changed
            g = max(0, int(md.get("min_action_frames", 1)) - 1)
            temporal = TemporalPrior(fps, None, None, g, "no_action_change")
            entities = (("player", {"attributes": ["player_id", "team", "action"],
                                    "moving_camera": bool(md.get("moving_camera", False))}),)
        else:
            v, d = float(md.get("v_max_kmh", 0.0)), float(md.get("d_entry_m", 1.0))
            g = compute_skip_amount(fps, v, d)
            temporal = TemporalPrior(fps, v, d, g, "no_car")
            entities = (("car", {"attributes": ["color", "brand", "plate"], "max_speed_kmh": v}),)
        side, mass = max(summary.half_mass.items(), key=lambda kv: (kv[1], kv[0])) if summary.half_mass else ("bottom", 0.0)
        spatial = SpatialPrior({"side": side, "fraction": 0.5}, round(float(mass), 6))
        tasks = _tasks(plan)
        relevance = Relevance(
            color_needed=_color_needed(plan),
            text_needed="text_extraction" in tasks,
            resolution_floor={t: TASK_RESOLUTION_FLOOR_PX[t] for t in tasks},
        )
        return Facts(entities, spatial, temporal, relevance, summary.empty_fraction, summary.object_height_min)

    def operator_select(self, facts: Facts, plan: Plan, catalog: Sequence[str] = REDUCTION_CATALOG) -> list[CandidateOp]:
        out: list[CandidateOp] = []
        tp = facts.temporal_prior
        if "Skip" in catalog:
            ok = facts.G >= 1 and tp.condition is not None
            out.append(CandidateOp(
                "Skip", {"amount": facts.G, "condition": tp.condition or "no_car"}, "G >= 1",
                f"objects persist for more than {facts.G} frames after an uninformative frame", ok))
        if "Crop" in catalog:
            sp = facts.spatial_prior
            ok = sp.region is not None and sp.confidence >= MIN_CROP_CONFIDENCE
            out.append(CandidateOp(
                "Crop", {"region": dict(sp.region or {})}, f"spatial_prior confidence >= {MIN_CROP_CONFIDENCE}",
                f"{sp.confidence:.3f} of object pixels fall in the {(sp.region or {}).get('side')} half", ok))
        if "Downscale" in catalog:
            floors = facts.relevance.resolution_floor
            chosen = next(
                (b for b in DOWNSCALE_STEPS if floors and all(facts.object_height_min / b >= f for f in floors.values())),
                None,
            )
            b = chosen or DOWNSCALE_STEPS[-1]
            out.append(CandidateOp(
                "Downscale", {"factor": b}, "object_height_min / b >= resolution_floor",
                f"smallest object {facts.object_height_min}px, floors {dict(floors)}", chosen is not None))
        if "Greyscale" in catalog:
            out.append(CandidateOp(
                "Greyscale", {}, "color_needed = false",
                "color is query relevant" if facts.relevance.color_needed else "no predicate or output uses color",
                not facts.relevance.color_needed))
        return out

    def plan_update(self, plan: Plan, candidates: Sequence[CandidateOp]) -> list[Insertion]:
        chosen = sorted((c for c in candidates if c.accepted), key=lambda c: INSERT_ORDER[c.op])
        return [
            Insertion(c.op, dict(c.params), "after_source" if c.op == "Skip" else "before_first_extract")
            for c in chosen
        ]


# --------------------------------------------------------------------------- external reasoner


class _SpatialModel(BaseModel):
    region: dict[str, Any] | None
    confidence: float = Field(ge=0.0, le=1.0)


class _TemporalModel(BaseModel):
    fps: float = Field(gt=0)
    v_max_kmh: float | None = None
    d_entry_m: float | None = None
    min_empty_frames: int = Field(ge=0)
    condition: Literal["no_car", "no_action_change"] | None = None


class _RelevanceModel(BaseModel):
    color_needed: bool
    text_needed: bool
    resolution_floor: dict[str, int]


class _FactsModel(BaseModel):
    entities: list[tuple[str, dict[str, Any]]]
    spatial_prior: _SpatialModel
    temporal_prior: _TemporalModel
    relevance: _RelevanceModel
    empty_fraction: float = Field(ge=0.0, le=1.0)
    object_height_min: int = Field(ge=0)


class _CandidateModel(BaseModel):
    op: Literal["Skip", "Crop", "Downscale", "Greyscale"]
    params: dict[str, Any]
    precondition: str
    rationale: str = ""
    accepted: bool


class _InsertionModel(BaseModel):
    op: Literal["Skip", "Crop", "Downscale", "Greyscale"]
    params: dict[str, Any]
    anchor: Literal["after_source", "before_first_extract"]


class _CandidateList(BaseModel):
    candidates: list[_CandidateModel]


class _InsertionList(BaseModel):
    insertions: list[_InsertionModel]


class ReasonerResponseError(RuntimeError):
    pass


class ExternalReasoner:
    """Reasoner backed by an HTTP service (``POST {endpoint}/reason``).

    Responses are schema-checked.  Safety-relevant numbers are never taken on
    trust: a skip bound that disagrees with the metadata formula rejects the
    response.  Any failure falls back to the scripted reasoner with a warning.
    """

    mode = "external"

    def __init__(self, endpoint: str, timeout_ms: int = 5000, client: httpx.Client | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_ms = timeout_ms
        self._client = client
        self.fallback = ScriptedReasoner()
        self.fallbacks = 0

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        client = self._client or httpx.Client(timeout=self.timeout_ms / 1000.0)
        try:
            resp = client.post(f"{self.endpoint}/reason", json=body)
            resp.raise_for_status()
            return resp.json()
        finally:
            if self._client is None:
                client.close()

    def _fall_back(self, phase: str, exc: Exception):
        self.fallbacks += 1
        log.warning("external reasoner failed in %s (%s); using scripted reasoner", phase, exc)

    def world_knowledge(self, plan: Plan, summary: SampleSummary) -> Facts:
        body = {"phase": "world_knowledge", "query_description": plan.metadata.description,
                "plan": serialize_plan(plan), "sample_summary": summary.to_dict()}
        expected = self.fallback.world_knowledge(plan, summary)
        try:
            doc = _FactsModel.model_validate(self._post(body))
            if doc.temporal_prior.min_empty_frames != expected.G:
                raise ReasonerResponseError(
                    f"G={doc.temporal_prior.min_empty_frames} contradicts metadata bound {expected.G}")
            return Facts(
                entities=tuple((k, p) for k, p in doc.entities),
                spatial_prior=SpatialPrior(doc.spatial_prior.region, doc.spatial_prior.confidence),
                temporal_prior=TemporalPrior(**doc.temporal_prior.model_dump()),
                relevance=Relevance(**doc.relevance.model_dump()),
                empty_fraction=doc.empty_fraction,
                object_height_min=doc.object_height_min,
            )
        except (httpx.HTTPError, ValidationError, ValueError, ReasonerResponseError) as exc:
            self._fall_back("world_knowledge", exc)
            return expected

    def operator_select(self, facts: Facts, plan: Plan, catalog: Sequence[str] = REDUCTION_CATALOG) -> list[CandidateOp]:
        body = {"phase": "operator_select", "query_description": plan.metadata.description,
                "plan": serialize_plan(plan), "facts": facts.to_dict(), "catalog": list(catalog)}
        try:
            doc = _CandidateList.model_validate(self._post(body))
            out = [CandidateOp(c.op, c.params, c.precondition, c.rationale, c.accepted) for c in doc.candidates]
            for c in out:
                if c.accepted and c.op == "Skip" and c.params.get("amount") != facts.G:
                    raise ReasonerResponseError("skip amount differs from the metadata bound")
                if c.accepted and c.op == "Greyscale" and facts.relevance.color_needed:
                    raise ReasonerResponseError("greyscale proposed although color is needed")
            return out
        except (httpx.HTTPError, ValidationError, ValueError, ReasonerResponseError) as exc:
            self._fall_back("operator_select", exc)
            return self.fallback.operator_select(facts, plan, catalog)

    def plan_update(self, plan: Plan, candidates: Sequence[CandidateOp]) -> list[Insertion]:
        body = {"phase": "plan_update", "query_description": plan.metadata.description,
                "plan": serialize_plan(plan), "candidates": [c.to_dict() for c in candidates]}
        try:
            doc = _InsertionList.model_validate(self._post(body))
            return [Insertion(i.op, i.params, i.anchor) for i in doc.insertions]
        except (httpx.HTTPError, ValidationError, ValueError) as exc:
            self._fall_back("plan_update", exc)
            return self.fallback.plan_update(plan, candidates)


def make_reasoner(mode: str = "scripted", endpoint: str | None = None, timeout_ms: int = 5000) -> Reasoner:
    if mode == "scripted":
        return ScriptedReasoner()
    if mode == "external":
        if not endpoint:
            raise ValueError("external reasoner needs an endpoint")
        return ExternalReasoner(endpoint, timeout_ms)
    raise ValueError(f"unknown reasoner mode {mode!r}")


# --------------------------------------------------------------------------- the three phases


def extract_world_knowledge(plan: Plan, summary: SampleSummary, reasoner: Reasoner | None = None) -> Facts:
    return (reasoner or ScriptedReasoner()).world_knowledge(plan, summary)


def select_operators(
    facts: Facts, plan: Plan, catalog: Sequence[str] = REDUCTION_CATALOG, reasoner: Reasoner | None = None
) -> list[CandidateOp]:
    return (reasoner or ScriptedReasoner()).operator_select(facts, plan, catalog)


def _first_extract(plan: Plan) -> int | None:
    return next((n.id for n in plan.topological() if n.op == "Extract"), None)


def _after_source(plan: Plan) -> int:
    src = next(n.id for n in plan.nodes if n.op == "Source")
    return plan.consumers(src)[0].id


def update_plan(plan: Plan, candidates: Sequence[CandidateOp], reasoner: Reasoner | None = None) -> Plan:
    """Insert accepted reduction operators; schema-breaking insertions are dropped with a warning."""
    insertions = (reasoner or ScriptedReasoner()).plan_update(plan, candidates)
    out = plan
    for ins in insertions:
        anchor = _after_source(out) if ins.anchor == "after_source" else _first_extract(out)
        if anchor is None:
            log.warning("no insertion point for %s; dropped", ins.op)
            continue
        try:
            nxt = insert_node(out, (ins.op, dict(ins.params)), before=anchor)
        except PlanError as exc:
            log.warning("insertion of %s dropped: %s", ins.op, exc)
            continue
        if not validate_plan(nxt).ok:
            log.warning("insertion of %s dropped: %s", ins.op, validate_plan(nxt).violations[0])
            continue
        out = nxt.add_rewrite(f"semantic: {nxt.find(ins.op)[0].label}")
    return out


# --------------------------------------------------------------------------- validation


@dataclass(frozen=True)
class ValidationResult:
    relative_accuracy: float
    passed: bool
    naive_accuracy: float
    optimized_accuracy: float
    baseline_degenerate: bool = False

    @property
    def pass_(self) -> bool:
        return self.passed


def _run_accuracy(plan: Plan, events: Sequence[StreamEvent], catalog: ModelCatalog, config: ExecConfig) -> float:
    dims = (events[0].frame.height, events[0].frame.width)
    outputs, m = run(compile(plan, catalog, config, dims), events)
    return query_accuracy(outputs, m.truths, plan.metadata.query_id, plan, config)


def empirical_validate(
    naive_plan: Plan,
    optimized_plan: Plan,
    sample: Sequence[StreamEvent],
    tau: float,
    catalog: ModelCatalog | None = None,
    config: ExecConfig | None = None,
    min_frames: int = 300,
    naive_accuracy: float | None = None,
) -> ValidationResult:
    """Run both plans on the same sample; pass iff optimized/naive accuracy >= tau."""
    if len(sample) < min_frames:
        raise ValueError(f"validation sample has {len(sample)} frames, need >= {min_frames}")
    catalog = catalog or default_catalog()
    config = config or ExecConfig()
    a_naive = naive_accuracy if naive_accuracy is not None else _run_accuracy(naive_plan, sample, catalog, config)
    a_opt = _run_accuracy(optimized_plan, sample, catalog, config)
    if a_naive <= 0.0:
        # nothing to be relative to: judge the optimized plan against ground truth directly
        return ValidationResult(a_opt, a_opt >= tau, a_naive, a_opt, baseline_degenerate=True)
    rel = a_opt / max(a_naive, EPS)
    return ValidationResult(rel, rel >= tau - 1e-12, a_naive, a_opt)


# --------------------------------------------------------------------------- optimization loop


def _refinements(plan: Plan):
    """One-step weaker variants in the fixed order: halve N, step b down, drop Crop, drop Greyscale."""
    skip = plan.find("Skip")
    if skip:
        n = skip[0]
        amount = n.params["amount"] // 2
        if amount >= 1:
            yield "halve skip", replace_node(plan, n.id, {**n.params, "amount": amount})
        else:
            yield "drop skip", remove_node(plan, n.id)
    down = plan.find("Downscale")
    if down:
        n = down[0]
        smaller = [b for b in DOWNSCALE_STEPS if b < n.params["factor"]]
        if smaller:
            yield "step down downscale", replace_node(plan, n.id, {**n.params, "factor": smaller[0]})
        else:
            yield "drop downscale", remove_node(plan, n.id)
    crop = plan.find("Crop")
    if crop:
        yield "drop crop", remove_node(plan, crop[0].id)
    grey = plan.find("Greyscale")
    if grey:
        yield "drop greyscale", remove_node(plan, grey[0].id)


@dataclass
class SemanticOutcome:
    plan: Plan
    facts: Facts
    candidates: list[CandidateOp]
    attempts: list[tuple[str, ValidationResult]] = field(default_factory=list)

    @property
    def refinements(self) -> int:
        return max(0, len(self.attempts) - 1)

    @property
    def passed(self) -> bool:
        return bool(self.attempts) and self.attempts[-1][1].passed


def semantic_search(
    plan: Plan,
    stream,
    reasoner: Reasoner | None = None,
    tau: float = 0.9,
    catalog: ModelCatalog | None = None,
    config: ExecConfig | None = None,
    sample_frames: int = 300,
    sample: Sequence[StreamEvent] | None = None,
    max_refinements: int = MAX_REFINEMENTS,
) -> SemanticOutcome:
    """Full semantic phase with validation and refinement; keeps the trace."""
    reasoner = reasoner or ScriptedReasoner()
    catalog = catalog or default_catalog()
    config = config or ExecConfig()
    if sample is None:
        sample, summary = sample_stream(stream, sample_frames)
    else:
        sample = list(sample)
        _, summary = sample_stream(_Replay(sample, getattr(stream, "metadata", {})), len(sample))
    facts = extract_world_knowledge(plan, summary, reasoner)
    candidates = select_operators(facts, plan, REDUCTION_CATALOG, reasoner)
    current = update_plan(plan, candidates, reasoner)
    outcome = SemanticOutcome(current, facts, candidates)
    if current == plan:
        return outcome
    a_naive = _run_accuracy(plan, sample, catalog, config)
    result = empirical_validate(plan, current, sample, tau, catalog, config, min_frames=1, naive_accuracy=a_naive)
    outcome.attempts.append(("initial", result))
    # weaken the first operator kind still present, in the fixed order
    while not result.passed and outcome.refinements < max_refinements:
        name, current = next(_refinements(current), (None, current))
        if name is None:
            break
        current = current.add_rewrite(f"refined: {name}")
        result = empirical_validate(plan, current, sample, tau, catalog, config, min_frames=1, naive_accuracy=a_naive)
        outcome.attempts.append((name, result))
    outcome.plan = current if result.passed else plan
    return outcome


def semantic_optimize(
    plan: Plan,
    stream,
    reasoner: Reasoner | None = None,
    tau: float = 0.9,
    **kwargs: Any,
) -> Plan:
    return semantic_search(plan, stream, reasoner, tau, **kwargs).plan


class _Replay:
    """Re-iterable wrapper that exposes stream metadata for a list of events."""

    def __init__(self, events: Sequence[StreamEvent], metadata: Mapping[str, Any]):
        self._events = events
        self.metadata = dict(metadata)

    def __iter__(self):
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

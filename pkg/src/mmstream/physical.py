"""Physical optimization: cost estimation, accuracy-constrained model choice,
and density-driven adaptive pruning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .datagen import StreamEvent
from .executor import ExecConfig, compile, query_accuracy, run
from .models import ModelCatalog, ModelError, ModelSpec, catalog_lookup, derive_variant, scaled_latency_us
from .plan import PixelFractionGE, Plan, conjuncts, replace_node
from .semantic import empirical_validate

__all__ = [
    "CostEstimate",
    "estimate_cost",
    "select_models",
    "ModelChoice",
    "DensityStats",
    "PruningPolicy",
    "adaptive_prune",
    "AdaptiveRun",
    "run_adaptive",
]

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- cost model


@dataclass(frozen=True)
class CostEstimate:
    expected_ms_per_frame: float
    reach_probabilities: Mapping[int, float]
    breakdown: Mapping[str, float]  # "id:label" -> expected ms per ingested frame
    per_call_ms: Mapping[int, float]

    def __str__(self) -> str:
        parts = ", ".join(f"{k}={v:.2f}" for k, v in self.breakdown.items() if v)
        return f"{self.expected_ms_per_frame:.2f} ms/frame ({parts})"


def estimate_cost(
    plan: Plan,
    catalog: ModelCatalog,
    sample_events: Sequence[StreamEvent],
    config: ExecConfig | None = None,
) -> CostEstimate:
    """Expected simulated cost per ingested frame: sum of reach x per-call latency.

    Reach probabilities come from running the plan on the sample; per-call
    latencies come from the bound models and the resolved input sizes.
    """
    if not sample_events:
        raise ValueError("empty sample")
    config = config or ExecConfig()
    dims = (sample_events[0].frame.height, sample_events[0].frame.width)
    pipe = compile(plan, catalog, config, dims)
    _, m = run(pipe, sample_events, keep_truths=False)
    n = m.frames_ingested
    reach: dict[int, float] = {}
    per_call: dict[int, float] = {}
    breakdown: dict[str, float] = {}
    src = next(node.id for node in plan.nodes if node.op == "Source")
    # every frame reaches the Source, but skipped frames are never decoded
    reach[src] = 1.0
    per_call[src] = config.ingest_us / 1000.0
    breakdown[f"{src}:Source"] = m.frames_admitted / n * per_call[src]
    for s in pipe.stages:
        r = m.reach[s.node_id] / n
        if s.op == "Extract":
            call = scaled_latency_us(s.model, s.view, config.alpha, config.grey_factor) / 1000.0
        elif s.op in ("Crop", "Downscale", "Greyscale"):
            call = config.cheap_us / 1000.0
        elif s.op == "Filter":
            pixel = sum(isinstance(c, PixelFractionGE) for c in conjuncts(s.params["predicate"]))
            call = pixel * config.cheap_us / 1000.0
        else:
            call = 0.0
        reach[s.node_id] = r
        per_call[s.node_id] = call
        breakdown[s.key] = r * call
    if pipe.skip_node is not None:
        reach[pipe.skip_node] = 1.0
    return CostEstimate(sum(breakdown.values()), reach, breakdown, per_call)


# --------------------------------------------------------------------------- model selection


@dataclass(frozen=True)
class ModelChoice:
    node_id: int
    task: str
    baseline: str
    chosen: str
    saving_ms: float


def _bound(plan: Plan, catalog: ModelCatalog, node_id: int) -> ModelSpec:
    n = plan.node(node_id)
    slot = n.params.get("model_slot", "auto")
    return catalog.baseline(n.params["task"]) if slot == "auto" else catalog.get(slot)


def _bind(plan: Plan, node_id: int, model_name: str) -> Plan:
    n = plan.node(node_id)
    return replace_node(plan, node_id, {**n.params, "model_slot": model_name})


def select_models(
    plan: Plan,
    catalog: ModelCatalog,
    tau: float,
    sample_events: Sequence[StreamEvent],
    config: ExecConfig | None = None,
    naive_plan: Plan | None = None,
    trace: list | None = None,
) -> Plan:
    """Bind each Extract to the fastest model within ``tau`` of its baseline accuracy.

    The whole plan is then validated against ``naive_plan`` (default: ``plan``
    itself with baseline models).  On failure, substitutions are undone one at
    a time, largest latency saving first, until validation passes.  The
    substitutions are dropped altogether if they do not lower the estimated
    cost on the sample.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    config = config or ExecConfig()
    reference = naive_plan or plan
    choices: list[ModelChoice] = []
    out = plan
    for n in plan.topological():
        if n.op != "Extract":
            continue
        task = n.params["task"]
        baseline = catalog.baseline(task)
        options = catalog_lookup(catalog, task, tau, baseline)
        current = _bound(plan, catalog, n.id)
        best = options[0] if options else current
        if best.name != current.name and best.latency_ms < current.latency_ms:
            choices.append(ModelChoice(n.id, task, current.name, best.name, current.latency_ms - best.latency_ms))
            out = _bind(out, n.id, best.name)
    if not choices:
        return plan
    result = empirical_validate(reference, out, sample_events, tau, catalog, config, min_frames=1)
    if trace is not None:
        trace.append(("select", [c.chosen for c in choices], result))
    for c in sorted(choices, key=lambda c: (-c.saving_ms, c.node_id)):
        if result.passed:
            break
        out = _bind(out, c.node_id, c.baseline)
        result = empirical_validate(reference, out, sample_events, tau, catalog, config, min_frames=1)
        if trace is not None:
            trace.append(("revert", c.chosen, result))
    # a weaker model can cost more overall (e.g. spurious changes defeat a Skip)
    kept = [c for c in choices if _bound(out, catalog, c.node_id).name == c.chosen]
    if kept:
        before = estimate_cost(plan, catalog, sample_events, config).expected_ms_per_frame
        after = estimate_cost(out, catalog, sample_events, config).expected_ms_per_frame
        if after >= before:
            if trace is not None:
                trace.append(("no_gain", [c.chosen for c in kept], (before, after)))
            return plan
    for c in choices:
        if _bound(out, catalog, c.node_id).name == c.chosen:
            out = out.add_rewrite(f"physical: {c.task} -> {c.chosen}")
    return out


# --------------------------------------------------------------------------- adaptive pruning


@dataclass(frozen=True)
class PruningPolicy:
    density_bands: tuple[float, float] = (0.2, 0.6)
    prune_rates: tuple[float, float, float] = (0.5, 0.25, 0.0)  # low, medium, high density
    hysteresis_windows: int = 2

    def band(self, density: float) -> int:
        lo, hi = self.density_bands
        return 0 if density <= lo else 1 if density <= hi else 2

    def rate(self, density: float) -> float:
        return self.prune_rates[self.band(density)]


@dataclass(frozen=True)
class DensityStats:
    """Object density of the most recent evaluation windows (oldest first)."""

    window_frames: int
    densities: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if any(not 0.0 <= d <= 1.0 for d in self.densities):
            raise ValueError("densities must lie in [0, 1]")

    @property
    def object_density(self) -> float:
        return self.densities[-1] if self.densities else 0.0

    @property
    def trend(self) -> float:
        return self.densities[-1] - self.densities[-2] if len(self.densities) >= 2 else 0.0

    def push(self, density: float, keep: int = 16) -> "DensityStats":
        return DensityStats(self.window_frames, (self.densities + (float(density),))[-keep:])

    @classmethod
    def from_presence(cls, flags: Sequence[bool], window_frames: int) -> "DensityStats":
        ds = tuple(
            sum(flags[i : i + window_frames]) / len(flags[i : i + window_frames])
            for i in range(0, len(flags), window_frames)
        )
        return cls(window_frames, ds)


def _rate_of(model: ModelSpec) -> float:
    for t in model.techniques:
        if t.startswith("prune("):
            return float(t[len("prune(") : -1])
    return 0.0


def adaptive_prune(
    current_model: ModelSpec,
    density_stats: DensityStats,
    policy: PruningPolicy,
    bases: Mapping[str, ModelSpec] | ModelCatalog,
) -> ModelSpec:
    """Pruned variant of the current model's base matching the recent traffic density.

    The model changes only when the last ``hysteresis_windows`` windows all
    fall in the same density band.
    """
    base_name = current_model.base_name
    try:
        base = bases.get(base_name) if isinstance(bases, ModelCatalog) else bases[base_name]
    except (KeyError, ModelError):
        raise ModelError(f"unknown base model {base_name!r}") from None
    if base is None:
        raise ModelError(f"unknown base model {base_name!r}")
    k = policy.hysteresis_windows
    recent = density_stats.densities[-k:]
    if len(recent) < k or len({policy.band(d) for d in recent}) != 1:
        return current_model
    rate = policy.rate(recent[-1])
    if abs(rate - _rate_of(current_model)) < 1e-12:
        return current_model
    return derive_variant(base, "prune", rate)


@dataclass
class AdaptiveRun:
    windows: list[dict] = field(default_factory=list)
    simulated_ms: float = 0.0
    frames: int = 0
    switches: int = 0

    @property
    def fps(self) -> float:
        return self.frames / (self.simulated_ms / 1000.0) if self.simulated_ms else 0.0


def run_adaptive(
    plan: Plan,
    catalog: ModelCatalog,
    events: Sequence[StreamEvent],
    node_id: int,
    policy: PruningPolicy = PruningPolicy(),
    window_frames: int = 300,
    config: ExecConfig | None = None,
) -> AdaptiveRun:
    """Run ``plan`` window by window, re-pruning the model of Extract ``node_id`` between windows."""
    config = config or ExecConfig()
    dims = (events[0].frame.height, events[0].frame.width)
    model = _bound(plan, catalog, node_id)
    stats = DensityStats(window_frames)
    out = AdaptiveRun()
    for start in range(0, len(events), window_frames):
        chunk = list(events[start : start + window_frames])
        cat = catalog.with_models([model])
        outputs, m = run(compile(_bind(plan, node_id, model.name), cat, config, dims), chunk)
        density = m.frames_with_objects / max(1, m.frames_admitted)
        acc = query_accuracy(outputs, m.truths, plan.metadata.query_id, plan, config)
        out.windows.append({"start": start, "model": model.name, "density": round(density, 4),
                            "ms": m.simulated_ms_total, "accuracy": acc})
        out.simulated_ms += m.simulated_ms_total
        out.frames += len(chunk)
        stats = stats.push(density)
        nxt = adaptive_prune(model, stats, policy, catalog)
        if nxt.name != model.name:
            out.switches += 1
        model = nxt
    return out

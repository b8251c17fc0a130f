"""Push-based plan execution under a simulated clock.

:func:`compile` binds a validated plan to catalog models and resolves symbolic
crop regions into pixels.  :func:`run` pushes stream events through the
resulting :class:`Pipeline`.  Every operator charges an integer number of
microseconds; the sum of those charges is the simulated running time.

Result semantics
----------------
Rows are dictionaries of extracted attributes.  A toll-booth frame yields at
most one row; an action extraction yields one row per visible player.

* ``Sink(mode="notify")`` fires when an identity (the ``track_by`` attributes,
  the empty tuple for the single-object toll lane) starts passing the filters
  or when its ``key`` changes.
* Windowed aggregates count *occurrences*: maximal runs of admitted frames in
  which an identity passes.  The occurrence label is the most common
  ``group_by`` tuple over the run and the occurrence belongs to the window
  containing its last frame.

:func:`reference_outputs` evaluates the same semantics directly on annotations
(every frame, exact attributes) and is the ground truth for
:func:`query_accuracy`.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .datagen import GroundTruth, StreamEvent
from .models import ModelCatalog, ModelError, ModelSpec, View, infer
from .pixels import Frame, Region, crop, downscale, greyscale, red_mask
from .plan import (
    And,
    PixelFractionGE,
    Plan,
    PlanError,
    build_query,
    conjuncts,
    validate_plan,
)

__all__ = [
    "ExecConfig",
    "CompileError",
    "Stage",
    "Pipeline",
    "OutputEvent",
    "Episode",
    "RunMetrics",
    "compile",
    "run",
    "run_plan",
    "resolve_region",
    "reference_outputs",
    "query_accuracy",
    "ACCURACY_METRIC",
    "output_set",
]

# attribute and the value it takes when no object is in view
PRESENCE_ATTRS = (("car_present", False), ("color", "none"), ("plate", ""))


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class ExecConfig:
    alpha: float = 0.5  # latency exponent for reduced model inputs
    cheap_op_ms: float = 0.2  # Crop / Downscale / Greyscale / pixel filter
    ingest_ms: float = 16.0  # decode charge per admitted frame at the Source
    grey_factor: float = 1.0 / 3.0  # input-size factor of a single-channel image
    min_track_frames: int = 2  # debounce, in consecutive admitted frames
    merge_gap_ms: int = 100  # same-label occurrences closer than this are one
    seed: int = 0  # mock-model seed

    @property
    def cheap_us(self) -> int:
        return int(round(self.cheap_op_ms * 1000))

    @property
    def ingest_us(self) -> int:
        return int(round(self.ingest_ms * 1000))


# --------------------------------------------------------------------------- compile


@dataclass(frozen=True)
class Stage:
    node_id: int
    op: str
    label: str
    params: Mapping[str, Any]
    model: ModelSpec | None = None
    region: Region | None = None  # Crop: region in the stage's input coordinates
    view: View | None = None  # Extract: what the model sees
    in_dims: tuple[int, int] = (0, 0)

    @property
    def key(self) -> str:
        return f"{self.node_id}:{self.label}"


@dataclass(frozen=True)
class Pipeline:
    plan: Plan
    stages: tuple[Stage, ...]
    frame_dims: tuple[int, int]
    skip_amount: int = 0
    skip_condition: str | None = None
    skip_node: int | None = None
    presence_stage: int | None = None  # node id of the first presence-capable Extract
    window_ms: int | None = None
    aggregate: Mapping[str, Any] | None = None
    sink: Mapping[str, Any] = field(default_factory=dict)
    config: ExecConfig = ExecConfig()

    @property
    def bindings(self) -> dict[int, ModelSpec]:
        return {s.node_id: s.model for s in self.stages if s.model is not None}


def resolve_region(spec: Mapping[str, Any], height: int, width: int) -> Region:
    """Symbolic ``{"side", "fraction"}`` or explicit ``{"rows", "cols"}`` -> pixel region."""
    if "side" in spec:
        side, f = spec["side"], float(spec["fraction"])
        rows, cols = int(round(height * f)), int(round(width * f))
        if side == "bottom":
            return Region(height - rows, height, 0, width)
        if side == "top":
            return Region(0, rows, 0, width)
        if side == "left":
            return Region(0, height, 0, cols)
        if side == "right":
            return Region(0, height, width - cols, width)
        raise CompileError(f"unknown crop side {side!r}")
    region = Region.from_dict(spec)
    if not region.fits(height, width):
        raise CompileError(f"region {region.as_tuple()} out of frame bounds {height}x{width}")
    return region


def _presence_attr(task: str) -> str | None:
    return {"object_detection": "car_present", "color_recognition": "color", "text_extraction": "plate"}.get(task)


def compile(
    plan: Plan,
    catalog: ModelCatalog,
    config: ExecConfig | None = None,
    frame_dims: tuple[int, int] = (240, 320),
) -> Pipeline:
    config = config or ExecConfig()
    report = validate_plan(plan)
    if not report.ok:
        raise CompileError("invalid plan: " + "; ".join(str(v) for v in report.violations))
    h, w = frame_dims
    full = h * w
    # view geometry in original-frame coordinates
    off_r, off_c, scale, grey = 0, 0, 1, False
    stages: list[Stage] = []
    skip_amount, skip_cond, skip_node = 0, None, None
    presence = None
    window_ms = None
    aggregate = None
    sink: Mapping[str, Any] = {}
    for n in plan.topological():
        p = n.params
        if n.op == "Skip":
            if skip_node is not None:
                raise CompileError("at most one Skip operator per plan")
            skip_amount, skip_cond, skip_node = int(p["amount"]), p["condition"], n.id
            continue
        if n.op == "Crop":
            region = resolve_region(p["region"], h, w)
            stages.append(Stage(n.id, n.op, n.label, p, region=region, in_dims=(h, w)))
            off_r += region.row_start * scale
            off_c += region.col_start * scale
            h, w = region.height, region.width
        elif n.op == "Downscale":
            b = int(p["factor"])
            if h % b or w % b:
                raise CompileError(f"Downscale({b}) does not divide the {h}x{w} view")
            stages.append(Stage(n.id, n.op, n.label, p, in_dims=(h, w)))
            h, w, scale = h // b, w // b, scale * b
        elif n.op == "Greyscale":
            stages.append(Stage(n.id, n.op, n.label, p, in_dims=(h, w)))
            grey = True
        elif n.op == "Extract":
            task = p["task"]
            slot = p.get("model_slot", "auto")
            try:
                model = catalog.baseline(task) if slot == "auto" else catalog.get(slot)
            except ModelError as exc:
                raise CompileError(f"unresolvable model_slot {slot!r}: {exc}") from exc
            if not model.supports(task):
                raise CompileError(f"model {model.name} cannot run {task}")
            view = View(Region(off_r, off_r + h * scale, off_c, off_c + w * scale), scale, grey, full)
            stages.append(Stage(n.id, n.op, f"Extract({task})", p, model=model, view=view, in_dims=(h, w)))
            if presence is None and _presence_attr(task):
                presence = n.id
        elif n.op == "Filter":
            stages.append(Stage(n.id, n.op, n.label, p, in_dims=(h, w)))
        elif n.op == "Window":
            window_ms = int(p["size_ms"])
        elif n.op == "Aggregate":
            aggregate = dict(p)
        elif n.op == "Sink":
            sink = dict(p)
    return Pipeline(
        plan=plan,
        stages=tuple(stages),
        frame_dims=frame_dims,
        skip_amount=skip_amount,
        skip_condition=skip_cond,
        skip_node=skip_node,
        presence_stage=presence,
        window_ms=window_ms,
        aggregate=aggregate,
        sink=sink,
        config=config,
    )


# --------------------------------------------------------------------------- results


@dataclass(frozen=True)
class OutputEvent:
    event_time: int
    frame_id: int
    key: tuple | None = None  # notify key
    window: int | None = None
    value: Any = None  # aggregate result

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_time": self.event_time,
            "frame_id": self.frame_id,
            "key": list(self.key) if self.key is not None else None,
            "window": self.window,
            "value": list(self.value) if isinstance(self.value, tuple) else self.value,
        }


@dataclass(frozen=True)
class Episode:
    """A maximal run of frames on which one identity passes with one key."""

    identity: tuple
    key: tuple
    first_frame: int
    last_frame: int


@dataclass
class RunMetrics:
    frames_ingested: int = 0
    frames_admitted: int = 0
    frames_skipped: int = 0
    frames_fully_processed: int = 0
    frames_with_objects: int = 0  # admitted frames on which the presence stage saw an object
    simulated_us_total: int = 0
    per_operator_us: dict[str, int] = field(default_factory=dict)
    reach: dict[int, int] = field(default_factory=dict)  # node id -> frames arriving
    outputs: list[OutputEvent] = field(default_factory=list)
    accuracy: float | None = None
    truths: list[tuple[int, int, GroundTruth]] = field(default_factory=list, repr=False)

    @property
    def simulated_ms_total(self) -> float:
        return self.simulated_us_total / 1000.0

    @property
    def per_operator_ms(self) -> dict[str, float]:
        return {k: v / 1000.0 for k, v in self.per_operator_us.items()}

    @property
    def fps(self) -> float:
        if self.frames_ingested == 0:
            return 0.0
        if self.simulated_us_total == 0:
            return float("inf")
        return self.frames_ingested / (self.simulated_us_total / 1e6)

    @property
    def ms_per_frame(self) -> float:
        return self.simulated_ms_total / self.frames_ingested if self.frames_ingested else 0.0


def output_set(outputs: Iterable[OutputEvent]) -> Counter:
    """Multiset of result values, ignoring the frame at which they were produced."""
    c: Counter = Counter()
    for o in outputs:
        c[(o.window, o.value) if o.key is None else ("notify", o.key)] += 1
    return c


# --------------------------------------------------------------------------- sink state


_MISSING = (None, "", "none")


def _mode(labels: Sequence[tuple]) -> tuple | None:
    usable = [t for t in labels if all(v not in _MISSING for v in t)]
    if not usable:
        return None
    counts = Counter(usable)
    best = max(counts.values())
    return min(t for t, c in counts.items() if c == best)


def _aggregate(fn: str, labels: list[tuple], k: int = 3) -> Any:
    counts = Counter(labels)
    if fn == "count":
        return len(labels)
    if fn == "distinct_count":
        return len(counts)
    if fn == "repeated":
        return tuple(sorted(_flat(t) for t, c in counts.items() if c >= 2))
    ranked = sorted(counts.items(), key=lambda tc: (-tc[1], tc[0]))
    if fn == "group_count_argmax":
        return _flat(ranked[0][0]) if ranked else None
    if fn == "top_k":
        return tuple(_flat(t) for t, _ in ranked[:k])
    raise PlanError(f"unknown aggregate fn {fn!r}")


def _flat(t: tuple) -> Any:
    return t[0] if len(t) == 1 else t


class _SinkState:
    """Turns per-frame passing rows into notifications or windowed aggregates.

    ``min_frames`` is a debounce: a notification fires, and an occurrence is
    counted, only after the same identity and key held on that many
    consecutive admitted frames.  Occurrences of one identity with the same
    label separated by at most ``merge_gap_ms`` are merged into one.
    """

    def __init__(self, sink: Mapping[str, Any], aggregate: Mapping[str, Any] | None,
                 window_ms: int | None, min_frames: int = 1, merge_gap_ms: int = 100):
        self.mode = sink.get("mode", "collect")
        self.key = list(sink.get("key", []))
        self.agg = aggregate
        self.window_ms = window_ms
        track = (aggregate or {}).get("track_by", sink.get("track_by", []))
        self.track_by = list(track or [])
        self.group_by = list((aggregate or {}).get("group_by", []))
        self.min_frames = max(1, min_frames)
        self.merge_gap_ms = merge_gap_ms
        self.outputs: list[OutputEvent] = []
        self.episodes: list[Episode] = []
        self._open_ep: dict[tuple, list] = {}  # identity -> [key, first, last, n, emitted]
        self._tracks: dict[tuple, list] = {}  # identity -> [labels, first_time, last_time]
        self._pending: dict[tuple, list] = {}  # identity -> [label, last_time], not yet final
        self._closed: list[tuple[int, tuple]] = []  # (window, label)
        self._next_window = 0
        self._last_time = 0

    def _ident(self, row: Mapping[str, Any]) -> tuple:
        return tuple(row.get(a) for a in self.track_by)

    def observe(self, frame_id: int, event_time: int, rows: list[Mapping[str, Any]]) -> None:
        self._last_time = event_time
        if self.mode == "notify":
            self._observe_notify(frame_id, event_time, rows)
        elif self.agg is not None and self.window_ms:
            self._observe_tracks(event_time, rows)
            self._flush(event_time, final=False)
        else:
            for r in rows:
                self.outputs.append(OutputEvent(event_time, frame_id, value=tuple(sorted(
                    (k, v) for k, v in r.items() if isinstance(v, (str, int, bool))))))

    def _observe_notify(self, frame_id: int, event_time: int, rows: list[Mapping[str, Any]]) -> None:
        current: dict[tuple, tuple] = {}
        for r in rows:
            ident = self._ident(r)
            if ident not in current:
                current[ident] = tuple(r.get(a) for a in self.key)
        for ident in [i for i in self._open_ep if i not in current]:
            self._end_episode(ident)
        for ident, key in current.items():
            ep = self._open_ep.get(ident)
            if ep is None or ep[0] != key:
                self._end_episode(ident)
                ep = self._open_ep[ident] = [key, frame_id, frame_id, 0, False]
            ep[2] = frame_id
            ep[3] += 1
            if ep[3] >= self.min_frames and not ep[4]:
                ep[4] = True
                self.outputs.append(OutputEvent(event_time, frame_id, key=key))

    def _end_episode(self, ident: tuple) -> None:
        ep = self._open_ep.pop(ident, None)
        if ep is not None:
            self.episodes.append(Episode(ident, ep[0], ep[1], ep[2]))

    def _observe_tracks(self, event_time: int, rows: list[Mapping[str, Any]]) -> None:
        current: dict[tuple, tuple] = {}
        for r in rows:
            ident = self._ident(r)
            if ident not in current:
                current[ident] = tuple(r.get(a) for a in self.group_by)
        for ident in [i for i in self._tracks if i not in current]:
            # keyed identities may resume after a short dropout; the anonymous
            # lane track ends at once (the next object may follow closely)
            if not self.track_by or event_time - self._tracks[ident][2] > self.merge_gap_ms:
                self._close(ident)
        for ident, label in current.items():
            tr = self._tracks.setdefault(ident, [[], event_time, event_time])
            tr[0].append(label)
            tr[2] = event_time

    def _close(self, ident: tuple) -> None:
        labels, first_time, last_time = self._tracks.pop(ident)
        label = _mode(labels)
        if label is None or len(labels) < self.min_frames:
            return
        pend = self._pending.get(ident)
        if pend is not None and pend[0] == label and first_time - pend[1] <= self.merge_gap_ms:
            pend[1] = last_time  # same occurrence seen again after a short dropout
            return
        if pend is not None:
            self._finalize(ident)
        self._pending[ident] = [label, last_time]

    def _finalize(self, ident: tuple) -> None:
        label, last_time = self._pending.pop(ident)
        self._closed.append((last_time // self.window_ms, label))

    def _settle(self, now: int) -> None:
        gap = self.merge_gap_ms
        for ident in list(self._pending):
            last = self._pending[ident][1]
            resumed = ident in self._tracks and self._tracks[ident][1] - last <= gap
            if now - last > gap and not resumed:
                self._finalize(ident)

    def _flush(self, now: int, final: bool) -> None:
        size = self.window_ms
        if final:
            for ident in list(self._pending):
                self._finalize(ident)
            last = now // size
        else:
            self._settle(now)
            # provisional occurrences may still move to a later window
            last = (now - self.merge_gap_ms) // size - 1
            for _, t in self._pending.values():
                last = min(last, t // size - 1)
        while self._next_window <= last:
            w = self._next_window
            labels = [lab for win, lab in self._closed if win == w]
            self._closed = [(win, lab) for win, lab in self._closed if win != w]
            value = _aggregate(self.agg["fn"], labels, int(self.agg.get("k", 3)))
            self.outputs.append(OutputEvent(now, -1, window=w, value=value))
            self._next_window += 1

    def finish(self) -> None:
        if self.mode == "notify":
            for ident in list(self._open_ep):
                self._end_episode(ident)
        elif self.agg is not None and self.window_ms:
            for ident in list(self._tracks):
                self._close(ident)
            self._flush(self._last_time, final=True)


# --------------------------------------------------------------------------- run


def _is_present(row: Mapping[str, Any], attr: str | None) -> bool:
    if attr is None:
        return True
    for name, absent in PRESENCE_ATTRS:
        if name == attr:
            return row.get(name) not in (absent, None)
    return True


def _materialize(frame: Frame, ops: list[Stage]) -> Frame:
    for s in ops:
        if s.op == "Crop":
            frame = crop(frame, s.region)
        elif s.op == "Downscale":
            frame = downscale(frame, int(s.params["factor"]))
        elif s.op == "Greyscale":
            frame = greyscale(frame)
    return frame


def _pixel_pass(pred: PixelFractionGE, frame: Frame) -> bool:
    if pred.color_class != "red":
        raise PlanError(f"unsupported pixel color class {pred.color_class!r}")
    return float(red_mask(frame.pixels).mean()) >= pred.threshold


def run(
    pipeline: Pipeline,
    stream: Iterable[StreamEvent],
    max_frames: int | None = None,
    keep_truths: bool = True,
) -> tuple[list[OutputEvent], RunMetrics]:
    """Push up to ``max_frames`` events through ``pipeline``."""
    if max_frames is not None and max_frames < 1:
        raise ValueError("max_frames must be >= 1")
    cfg = pipeline.config
    cheap = cfg.cheap_us
    m = RunMetrics()
    charges: dict[str, int] = {}
    src_key = "Source"
    presence_attr = None
    if pipeline.presence_stage is not None:
        st = next(s for s in pipeline.stages if s.node_id == pipeline.presence_stage)
        presence_attr = _presence_attr(st.params["task"])
    sink = _SinkState(pipeline.sink, pipeline.aggregate, pipeline.window_ms, cfg.min_track_frames, cfg.merge_gap_ms)
    reach = {s.node_id: 0 for s in pipeline.stages}
    skip_left = 0
    admitted_window = None
    prev_actions: dict[int, str] | None = None

    for ev in stream:
        if max_frames is not None and m.frames_ingested >= max_frames:
            break
        frame, truth = ev.frame, ev.truth
        m.frames_ingested += 1
        if keep_truths:
            m.truths.append((frame.frame_id, frame.event_time, truth))
        window = frame.event_time // pipeline.window_ms if pipeline.window_ms else None
        if skip_left > 0 and window != admitted_window:
            skip_left = 0  # never skip the first frame of a window
        if skip_left > 0:
            skip_left -= 1
            m.frames_skipped += 1
            continue
        m.frames_admitted += 1
        admitted_window = window
        if cfg.ingest_us:  # skipped frames are dropped before decoding
            charges[src_key] = charges.get(src_key, 0) + cfg.ingest_us

        rows: list[dict[str, Any]] = [{"frame_id": frame.frame_id, "event_time": frame.event_time}]
        pending: list[Stage] = []  # pixel reductions not yet materialized
        view_frame = frame
        presence: bool | None = None
        actions: dict[int, str] | None = None
        survived = True
        for s in pipeline.stages:
            reach[s.node_id] += 1
            if s.op in ("Crop", "Downscale", "Greyscale"):
                charges[s.key] = charges.get(s.key, 0) + cheap
                pending.append(s)
                continue
            if s.op == "Extract":
                task = s.params["task"]
                ex = infer(s.model, s.view, truth, frame.frame_id, task, cfg.seed, cfg.alpha, cfg.grey_factor)
                charges[s.key] = charges.get(s.key, 0) + ex.latency_us
                if task == "action_recognition":
                    players = ex.values["players"]
                    actions = {pid: a for pid, _, a in players}
                    rows = [
                        {**r, "player_id": pid, "team": team, "action": a}
                        for r in rows
                        for pid, team, a in players
                    ]
                else:
                    for r in rows:
                        r.update(ex.values)
                    if s.node_id == pipeline.presence_stage and rows:
                        presence = _is_present(rows[0], presence_attr)
            elif s.op == "Filter":
                pred = s.params["predicate"]
                parts = conjuncts(pred)
                pixel = [c for c in parts if isinstance(c, PixelFractionGE)]
                if pixel:
                    charges[s.key] = charges.get(s.key, 0) + cheap * len(pixel)
                    if pending:
                        view_frame = _materialize(view_frame, pending)
                        pending = []
                    if not all(_pixel_pass(c, view_frame) for c in pixel):
                        rows = []
                rest = [c for c in parts if not isinstance(c, PixelFractionGE)]
                if rest and rows:
                    check = rest[0] if len(rest) == 1 else And(tuple(rest))
                    rows = [r for r in rows if check.evaluate(r)]
            if not rows:
                survived = False
                break

        if presence:
            m.frames_with_objects += 1
        passing = [r for r in rows if _is_present(r, presence_attr)] if survived else []
        if survived:
            m.frames_fully_processed += 1
        sink.observe(frame.frame_id, frame.event_time, passing)

        if pipeline.skip_amount > 0:
            if pipeline.skip_condition == "no_car" and presence is False:
                skip_left = pipeline.skip_amount
            elif pipeline.skip_condition == "no_action_change" and actions is not None:
                if prev_actions is not None and actions == prev_actions:
                    skip_left = pipeline.skip_amount
        if actions is not None:
            prev_actions = actions

    sink.finish()
    m.per_operator_us = dict(sorted(charges.items()))
    m.simulated_us_total = sum(charges.values())
    m.reach = reach
    m.outputs = sink.outputs
    return sink.outputs, m


def run_plan(
    plan: Plan,
    catalog: ModelCatalog,
    stream,
    max_frames: int | None = None,
    config: ExecConfig | None = None,
) -> tuple[list[OutputEvent], RunMetrics]:
    """Compile against the stream's frame size and run; fills ``metrics.accuracy``."""
    md = getattr(stream, "metadata", {}) or {}
    dims = (int(md.get("height", 240)), int(md.get("width", 320)))
    pipe = compile(plan, catalog, config, dims)
    outputs, metrics = run(pipe, stream, max_frames)
    metrics.accuracy = query_accuracy(outputs, metrics.truths, plan.metadata.query_id, plan, pipe.config)
    return outputs, metrics


# --------------------------------------------------------------------------- ground truth


_TRUTH_ATTRS = {
    "object_detection": lambda t: {"car_present": t.car_present, "bbox": t.bbox, "brand": t.brand},
    "color_recognition": lambda t: {"color": t.color if t.car_present else "none"},
    "text_extraction": lambda t: {"plate": t.plate if t.car_present and t.plate else ""},
}


def _truth_rows(plan: Plan, truth: GroundTruth, frame_id: int, event_time: int) -> list[dict[str, Any]]:
    rows: list[dict[str, Any]] = [{"frame_id": frame_id, "event_time": event_time}]
    for n in plan.topological():
        if n.op == "Extract":
            task = n.params["task"]
            if task == "action_recognition":
                rows = [
                    {**r, "player_id": p.player_id, "team": p.team, "action": p.action}
                    for r in rows
                    for p in truth.players
                ]
            else:
                vals = _TRUTH_ATTRS[task](truth)
                for r in rows:
                    r.update(vals)
        elif n.op == "Filter":
            rest = [c for c in conjuncts(n.params["predicate"]) if not isinstance(c, PixelFractionGE)]
            rows = [r for r in rows if all(c.evaluate(r) for c in rest)]
    return rows


def reference_outputs(
    plan: Plan, truths: Iterable[tuple[int, int, GroundTruth]], config: ExecConfig | None = None
) -> tuple[list[OutputEvent], list[Episode]]:
    """Query results computed from annotations on every frame (no models, no reductions)."""
    agg = next((dict(n.params) for n in plan.nodes if n.op == "Aggregate"), None)
    win = next((int(n.params["size_ms"]) for n in plan.nodes if n.op == "Window"), None)
    sink_p = next(dict(n.params) for n in plan.nodes if n.op == "Sink")
    presence = None
    for n in plan.topological():
        if n.op == "Extract" and _presence_attr(n.params["task"]):
            presence = _presence_attr(n.params["task"])
            break
    cfg = config or ExecConfig()
    sink = _SinkState(sink_p, agg, win, cfg.min_track_frames, cfg.merge_gap_ms)
    for frame_id, event_time, truth in truths:
        rows = _truth_rows(plan, truth, frame_id, event_time)
        sink.observe(frame_id, event_time, [r for r in rows if _is_present(r, presence)])
    sink.finish()
    return sink.outputs, sink.episodes


ACCURACY_METRIC = {
    "Q1": "per_object", "Q2": "per_object",
    "Q3": "event_f1", "Q8": "event_f1", "Q12": "event_f1",
    "Q4": "window", "Q5": "window", "Q6": "window", "Q7": "window", "Q9": "window",
    "Q10": "window", "Q11": "window", "Q13": "window",
}


def _as_truths(truth_stream) -> list[tuple[int, int, GroundTruth]]:
    out = []
    for item in truth_stream:
        if isinstance(item, StreamEvent):
            out.append((item.frame_id, item.event_time, item.truth))
        else:
            out.append(tuple(item))
    return out


def query_accuracy(
    outputs: Sequence[OutputEvent],
    truth_stream,
    query_id: str,
    plan: Plan | None = None,
    config: ExecConfig | None = None,
) -> float:
    """Query-result accuracy of ``outputs`` against annotations.

    ``plan`` supplies window sizes; the naive plan with default windows is
    used when omitted.  Only the structure that defines the query (extract
    tasks, attribute filters, window, aggregate, sink) matters here.
    """
    if query_id not in ACCURACY_METRIC:
        raise PlanError(f"unknown query id {query_id!r}")
    ref_plan = build_query(query_id)
    if plan is not None:
        win = next((n.params["size_ms"] for n in plan.nodes if n.op == "Window"), None)
        if win is not None:
            ref_plan = _with_window(ref_plan, int(win))
    truths = _as_truths(truth_stream)
    ref_out, episodes = reference_outputs(ref_plan, truths, config)
    metric = ACCURACY_METRIC[query_id]
    if metric == "window":
        want = {o.window: o.value for o in ref_out}
        got = {o.window: o.value for o in outputs if o.window is not None}
        if not want:
            return 1.0
        return sum(1 for w, v in want.items() if got.get(w) == v) / len(want)
    notes = [o for o in outputs if o.key is not None]
    matched = [any(_hit(o, e) for o in notes) for e in episodes]
    if metric == "per_object":
        if not episodes:
            return 1.0 if not notes else 0.0
        return sum(matched) / len(episodes)
    if not episodes and not notes:
        return 1.0
    if not episodes or not notes:
        return 0.0
    precision = sum(1 for o in notes if any(_hit(o, e) for e in episodes)) / len(notes)
    recall = sum(matched) / len(episodes)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _hit(o: OutputEvent, e: Episode) -> bool:
    return o.key == e.key and e.first_frame <= o.frame_id <= e.last_frame


def _with_window(plan: Plan, size_ms: int) -> Plan:
    from .plan import replace_node

    for n in plan.nodes:
        if n.op == "Window":
            return replace_node(plan, n.id, {**n.params, "size_ms": size_ms})
    return plan


def iter_limit(stream, n: int) -> Iterator[StreamEvent]:
    for i, ev in enumerate(stream):
        if i >= n:
            return
        yield ev

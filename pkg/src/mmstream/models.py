"""Simulated inference models.

A :class:`ModelSpec` is a latency/accuracy/size record.  :func:`infer` turns a
spec plus the ground truth of a frame into an extraction: with probability
equal to the model accuracy it returns the truth, otherwise a corrupted value.
The coin flips are a pure function of ``(seed, model, task, frame_id)`` so two
plans that run the same model on the same frame see the same error.

Compression techniques (quantization, pruning, distillation) are modelled as
catalog variants whose size, latency and accuracy are scaled by policy
coefficients.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .datagen import ACTIONS, BRANDS, COLORS, GroundTruth
from .pixels import Region

__all__ = [
    "ANY_TASK",
    "TASK_RESOLUTION_FLOOR_PX",
    "LOW_RESOLUTION_PENALTY",
    "ModelSpec",
    "VariantPolicy",
    "DEFAULT_POLICY",
    "ModelCatalog",
    "View",
    "Extraction",
    "derive_variant",
    "default_catalog",
    "catalog_lookup",
    "infer",
    "scaled_latency_us",
    "ModelError",
]

ANY_TASK = "any"
# smallest object height (in model-input pixels) at which a task still works
TASK_RESOLUTION_FLOOR_PX = {
    "object_detection": 8,
    "color_recognition": 4,
    "text_extraction": 24,
    "action_recognition": 16,
}
LOW_RESOLUTION_PENALTY = 0.5


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    name: str
    task: str
    latency_ms: float
    accuracy: float
    size_mparams: float
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ModelError(f"{self.name}: accuracy {self.accuracy} outside [0, 1]")
        if self.latency_ms <= 0:
            raise ModelError(f"{self.name}: latency must be positive")
        prov = dict(self.provenance) or {"base": self.name, "techniques": []}
        prov.setdefault("base", self.name)
        prov["techniques"] = list(prov.get("techniques", []))
        object.__setattr__(self, "provenance", prov)

    def __hash__(self) -> int:
        return hash((self.name, self.task, self.latency_ms, self.accuracy))

    def supports(self, task: str) -> bool:
        return self.task in (task, ANY_TASK)

    @property
    def base_name(self) -> str:
        return self.provenance["base"]

    @property
    def techniques(self) -> list[str]:
        return list(self.provenance["techniques"])

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["provenance"] = {"base": self.base_name, "techniques": self.techniques}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelSpec":
        try:
            return cls(
                name=str(d["name"]),
                task=str(d["task"]),
                latency_ms=float(d["latency_ms"]),
                accuracy=float(d["accuracy"]),
                size_mparams=float(d["size_mparams"]),
                provenance=dict(d.get("provenance") or {}),
            )
        except KeyError as exc:
            raise ModelError(f"catalog record missing field {exc}") from exc


@dataclass(frozen=True)
class VariantPolicy:
    """Multipliers applied by each compression technique (catalog policy)."""

    quantize8: tuple[float, float, float] = (0.5, 0.5, 0.99)  # size, latency, accuracy
    prune_latency_slope: float = 0.8
    prune_accuracy_slope: float = 0.15
    distill_accuracy_floor: float = 0.85


DEFAULT_POLICY = VariantPolicy()


def derive_variant(
    base: ModelSpec,
    technique: str,
    amount: float | None = None,
    policy: VariantPolicy = DEFAULT_POLICY,
) -> ModelSpec:
    """Apply ``quantize8``, ``prune`` (rate ``amount``) or ``distill`` (scale ``amount``)."""
    if technique == "quantize8":
        s, l, a = policy.quantize8
        tag = "quantize8"
    elif technique == "prune":
        r = float(amount if amount is not None else 0.0)
        if not 0.0 <= r < 1.0:
            raise ModelError(f"prune rate {r} outside [0, 1)")
        if r == 0.0:
            return base
        s, l, a = 1 - r, 1 - policy.prune_latency_slope * r, 1 - policy.prune_accuracy_slope * r
        tag = f"prune({r:g})"
    elif technique == "distill":
        sc = float(amount if amount is not None else -1)
        if not 0.0 < sc < 1.0:
            raise ModelError(f"distill scale {sc} outside (0, 1)")
        floor = policy.distill_accuracy_floor
        s, l, a = sc, sc, floor + (1 - floor) * sc
        tag = f"distill({sc:g})"
    else:
        raise ModelError(f"unknown technique {technique!r}")
    return ModelSpec(
        name=f"{base.name}+{tag}",
        task=base.task,
        latency_ms=base.latency_ms * l,
        accuracy=base.accuracy * a,
        size_mparams=base.size_mparams * s,
        provenance={"base": base.base_name, "techniques": base.techniques + [tag]},
    )


class ModelCatalog:
    """Immutable collection of model specs."""

    def __init__(self, models: Iterable[ModelSpec]):
        self.models: tuple[ModelSpec, ...] = tuple(models)
        names = [m.name for m in self.models]
        if len(names) != len(set(names)):
            raise ModelError("duplicate model names in catalog")
        self._by_name = {m.name: m for m in self.models}

    def __iter__(self):
        return iter(self.models)

    def __len__(self) -> int:
        return len(self.models)

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def get(self, name: str) -> ModelSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"model {name!r} not in catalog") from None

    def for_task(self, task: str) -> list[ModelSpec]:
        return [m for m in self.models if m.supports(task)]

    def baseline(self, task: str) -> ModelSpec:
        """Most accurate model for ``task`` (ties: slower, i.e. larger, model first)."""
        cands = self.for_task(task)
        if not cands:
            raise ModelError(f"no model in catalog for task {task!r}")
        return max(cands, key=lambda m: (m.accuracy, m.latency_ms, m.name))

    def lookup(self, task: str, min_relative_accuracy: float, baseline: ModelSpec) -> list[ModelSpec]:
        return catalog_lookup(self, task, min_relative_accuracy, baseline)

    def with_models(self, extra: Iterable[ModelSpec]) -> "ModelCatalog":
        have = set(self._by_name)
        return ModelCatalog(list(self.models) + [m for m in extra if m.name not in have])

    def perfect(self) -> "ModelCatalog":
        """Same catalog with every accuracy set to 1 (ground-truth oracle)."""
        return ModelCatalog(replace(m, accuracy=1.0) for m in self.models)

    def to_json(self) -> str:
        return json.dumps([m.to_dict() for m in self.models], indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelCatalog":
        doc = json.loads(text)
        if not isinstance(doc, list):
            raise ModelError("catalog file must be a JSON array")
        return cls(ModelSpec.from_dict(d) for d in doc)

    @classmethod
    def load(cls, path: str | Path) -> "ModelCatalog":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def catalog_lookup(
    catalog: ModelCatalog, task: str, min_relative_accuracy: float, baseline: ModelSpec
) -> list[ModelSpec]:
    """Task models with accuracy >= ``min_relative_accuracy`` x baseline, fastest first."""
    if not catalog.for_task(task):
        raise ModelError(f"no model in catalog for task {task!r}")
    floor = min_relative_accuracy * baseline.accuracy
    ok = [m for m in catalog.for_task(task) if m.accuracy >= floor - 1e-12]
    return sorted(ok, key=lambda m: (m.latency_ms, -m.accuracy, m.name))


BASE_MODELS = (
    ModelSpec("mllm_base", ANY_TASK, 48.0, 0.98, 7000.0),
    ModelSpec("detector_small", "object_detection", 10.0, 0.93, 11.0),
    ModelSpec("colorcv", "color_recognition", 2.0, 0.95, 0.1),
    ModelSpec("ocr_small", "text_extraction", 15.0, 0.94, 9.0),
    ModelSpec("action_small", "action_recognition", 20.0, 0.90, 25.0),
)


def default_catalog(
    base_models: Sequence[ModelSpec] = BASE_MODELS,
    variants: Sequence[tuple[str, str, float | None]] = (("mllm_base", "quantize8", None),),
    policy: VariantPolicy = DEFAULT_POLICY,
) -> ModelCatalog:
    """Base models plus the derived variants named in ``variants``."""
    cat = ModelCatalog(base_models)
    derived = [derive_variant(cat.get(b), t, a, policy) for b, t, a in variants]
    return cat.with_models(derived)


# --------------------------------------------------------------------------- inference


@dataclass(frozen=True)
class View:
    """What a model is shown: a region of the original frame at some scale."""

    region: Region  # in original frame coordinates
    scale: int = 1  # cumulative downscale factor
    grey: bool = False
    full_pixels: int = 0  # pixels of the original frame

    @property
    def pixels(self) -> int:
        return (self.region.height // self.scale) * (self.region.width // self.scale)


@dataclass(frozen=True)
class Extraction:
    task: str
    values: Mapping[str, Any]
    latency_us: int


def scaled_latency_us(model: ModelSpec, view: View, alpha: float = 0.5, grey_factor: float = 1.0) -> int:
    """Per-call latency; reduced inputs are charged ``(pixels / full pixels) ** alpha``."""
    ratio = view.pixels / view.full_pixels if view.full_pixels else 1.0
    if view.grey:
        ratio *= grey_factor
    return int(round(model.latency_ms * 1000.0 * min(1.0, ratio) ** alpha))


_MASK = (1 << 64) - 1


def _mix(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class _Coins:
    """Deterministic uniform stream keyed by (seed, model, task, frame, extra)."""

    def __init__(self, *keys: Any):
        h = 0
        for k in keys:
            v = k if isinstance(k, int) else zlib.crc32(str(k).encode())
            h = _mix(h ^ (v & _MASK))
        self._state = h

    def uniform(self) -> float:
        self._state = _mix(self._state)
        return (self._state >> 11) / float(1 << 53)

    def index(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)


def _visible(box: Region | None, view: View) -> Region | None:
    if box is None:
        return None
    inter = box.intersection(view.region)
    if inter is None or inter.area * 2 < box.area:
        return None
    return inter


def _effective_accuracy(model: ModelSpec, task: str, height_px: float) -> float:
    p = model.accuracy
    if height_px < TASK_RESOLUTION_FLOOR_PX[task]:
        p *= LOW_RESOLUTION_PENALTY
    return p


def _corrupt_plate(plate: str, coins: _Coins) -> str:
    pos = coins.index(len(plate))
    ch = plate[pos]
    pool = "0123456789" if ch.isdigit() else "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    others = [c for c in pool if c != ch]
    return plate[:pos] + others[coins.index(len(others))] + plate[pos + 1 :]


def infer(
    model: ModelSpec,
    view: View,
    truth: GroundTruth,
    frame_id: int,
    task: str | None = None,
    seed: int = 0,
    alpha: float = 0.5,
    grey_factor: float = 1.0,
) -> Extraction:
    """Mock extraction of ``task`` from ``view`` of a frame whose annotations are ``truth``."""
    task = task or model.task
    if task == ANY_TASK or not model.supports(task):
        raise ModelError(f"model {model.name} (task {model.task}) cannot run {task}")
    coins = _Coins(seed, model.name, task, frame_id)
    latency = scaled_latency_us(model, view, alpha, grey_factor)

    if task == "action_recognition":
        players = []
        for p in truth.players:
            vis = _visible(p.bbox, view)
            if vis is None:
                continue
            pc = _Coins(seed, model.name, task, frame_id, p.player_id)
            acc = _effective_accuracy(model, task, vis.height / view.scale)
            action = p.action
            if pc.uniform() >= acc:
                others = [a for a in ACTIONS if a != action]
                action = others[pc.index(len(others))]
            players.append((p.player_id, p.team, action))
        return Extraction(task, {"players": players}, latency)

    vis = _visible(truth.bbox, view) if truth.car_present else None
    present = vis is not None
    height = vis.height / view.scale if vis is not None else float("inf")
    correct = coins.uniform() < _effective_accuracy(model, task, height)

    if task == "object_detection":
        if correct:
            vals = {"car_present": present, "bbox": vis if present else None,
                    "brand": truth.brand if present else None}
        elif present:
            vals = {"car_present": False, "bbox": None, "brand": None}
        else:
            vals = {"car_present": True, "bbox": view.region, "brand": BRANDS[coins.index(len(BRANDS))]}
    elif task == "color_recognition":
        true_color = truth.color if present else "none"
        if correct:
            color = true_color
        else:
            others = [c for c in COLORS if c != true_color]
            color = others[coins.index(len(others))]
        vals = {"color": color}
    elif task == "text_extraction":
        plate = truth.plate if present and truth.plate else ""
        if not correct and plate:
            plate = _corrupt_plate(plate, coins)
        vals = {"plate": plate}
    else:
        raise ModelError(f"unknown task {task!r}")
    return Extraction(task, vals, latency)

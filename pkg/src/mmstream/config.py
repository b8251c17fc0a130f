"""Benchmark configuration: one JSON document, every field optional."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .datagen import TollBoothConfig, VolleyballConfig
from .executor import ExecConfig
from .models import ModelCatalog, default_catalog
from .physical import PruningPolicy
from .plan import DEFAULT_WINDOWS_MS, QUERY_IDS

__all__ = ["ConfigError", "BenchConfig", "ReasonerConfig", "PHASES", "load_config"]

PHASES = ("semantic", "logical", "physical")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ReasonerConfig:
    mode: str = "scripted"  # "scripted" | "external"
    endpoint: str | None = None
    timeout_ms: int = 5000


@dataclass(frozen=True)
class BenchConfig:
    tollbooth: Mapping[str, Any] = field(default_factory=dict)  # TollBoothConfig overrides
    volleyball: Mapping[str, Any] = field(default_factory=dict)  # VolleyballConfig overrides
    catalog_path: str | None = None
    tau: float = 0.9
    sample_frames: int = 1800
    run_frames: int = 6000
    seeds: tuple[int, ...] = (0, 1, 2)
    phases: tuple[str, ...] = PHASES
    queries: tuple[str, ...] = QUERY_IDS
    out_dir: str = "out"
    windows_ms: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_WINDOWS_MS))
    exec: ExecConfig = field(default_factory=ExecConfig)
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    physical: PruningPolicy = field(default_factory=PruningPolicy)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        bad = [p for p in self.phases if p not in PHASES]
        if bad:
            raise ConfigError(f"unknown phases {bad}; choose from {list(PHASES)}")
        # phases always run in the fixed semantic -> logical -> physical order
        object.__setattr__(self, "phases", tuple(p for p in PHASES if p in self.phases))
        unknown = [q for q in self.queries if q not in QUERY_IDS]
        if unknown:
            raise ConfigError(f"unknown queries {unknown}; valid ids: {', '.join(QUERY_IDS)}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.sample_frames < 300:
            raise ConfigError("sample_frames must be >= 300")
        if self.run_frames < 1:
            raise ConfigError("run_frames must be >= 1")
        if self.reasoner.mode not in ("scripted", "external"):
            raise ConfigError(f"unknown reasoner mode {self.reasoner.mode!r}")
        for name in ("tollbooth", "volleyball"):
            self.stream_config(name, 0)  # surfaces bad overrides early

    def stream_config(self, domain: str, seed: int) -> TollBoothConfig | VolleyballConfig:
        cls = TollBoothConfig if domain == "tollbooth" else VolleyballConfig
        overrides = dict(self.tollbooth if domain == "tollbooth" else self.volleyball)
        overrides.setdefault("duration_frames", max(self.run_frames, self.sample_frames))
        known = {f.name for f in fields(cls)}
        extra = sorted(set(overrides) - known)
        if extra:
            raise ConfigError(f"unknown {domain} fields {extra}")
        try:
            cfg = cls(**{**overrides, "seed": seed})
            cfg.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad {domain} config: {exc}") from None
        return cfg

    def exec_for(self, seed: int) -> ExecConfig:
        return replace(self.exec, seed=seed)

    def load_catalog(self) -> ModelCatalog:
        if self.catalog_path is None:
            return default_catalog()
        try:
            return ModelCatalog.load(self.catalog_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load catalog {self.catalog_path}: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["phases"] = list(self.phases)
        d["queries"] = list(self.queries)
        d["physical"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["physical"].items()}
        return d

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "BenchConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown config fields {extra}")
        kw: dict[str, Any] = dict(doc)
        try:
            if "exec" in kw:
                kw["exec"] = ExecConfig(**kw["exec"])
            if "reasoner" in kw:
                kw["reasoner"] = ReasonerConfig(**kw["reasoner"])
            if "physical" in kw:
                p = dict(kw["physical"])
                for key in ("density_bands", "prune_rates"):
                    if key in p:
                        p[key] = tuple(float(x) for x in p[key])
                kw["physical"] = PruningPolicy(**p)
            for key in ("seeds", "phases", "queries"):
                if key in kw:
                    kw[key] = tuple(kw[key])
            if "windows_ms" in kw:
                kw["windows_ms"] = {**DEFAULT_WINDOWS_MS, **kw["windows_ms"]}
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> BenchConfig:
    if path is None:
        return BenchConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return BenchConfig.from_dict(doc)

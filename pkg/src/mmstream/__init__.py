"""Multimodal stream query optimizer with a simulated execution engine."""
from .bench import BenchReport, optimize_query, run_benchmark
from .config import BenchConfig, ConfigError, load_config
from .datagen import TollBoothConfig, VolleyballConfig, gen_tollbooth, gen_volleyball, make_stream, sample_stream
from .executor import ExecConfig, compile, query_accuracy, run, run_plan
from .kinematics import compute_skip_amount
from .logical import apply_logical
from .models import ModelCatalog, ModelSpec, default_catalog, derive_variant
from .physical import adaptive_prune, estimate_cost, select_models
from .plan import Plan, PlanError, build_query, deserialize_plan, serialize_plan, validate_plan
from .semantic import empirical_validate, semantic_optimize, semantic_search

__all__ = [
    "BenchConfig", "BenchReport", "ConfigError", "ExecConfig", "ModelCatalog", "ModelSpec", "Plan",
    "PlanError", "TollBoothConfig", "VolleyballConfig", "adaptive_prune", "apply_logical",
    "build_query", "compile", "compute_skip_amount", "default_catalog", "derive_variant",
    "deserialize_plan", "empirical_validate", "estimate_cost", "gen_tollbooth", "gen_volleyball",
    "load_config", "make_stream", "optimize_query", "query_accuracy", "run", "run_benchmark",
    "run_plan", "sample_stream", "select_models", "semantic_optimize", "semantic_search",
    "serialize_plan", "validate_plan",
]

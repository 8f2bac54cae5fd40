"""Experiment driver: metrics, comparisons, ablations, theorem checks and the CLI."""
from .config import (
    AblationKind,
    ConfigError,
    ExperimentConfig,
    MultimodalityConfig,
    RuntimeSettings,
    build_config,
    load_config,
)
from .experiments import (
    ArtifactNotFound,
    Artifacts,
    DiffusionSampler,
    MultistartSampler,
    controller_factories,
    multimodality_curves,
    run_ablation,
    run_comparison,
)
from .metrics import ExperimentReport, ReportRow, loglog_slope, multimodality_percentage
from .theorems import TheoremBoundParams, ToyProblem, theorem1_coverage_check, theorem2_check

__all__ = [
    "AblationKind",
    "ArtifactNotFound",
    "Artifacts",
    "ConfigError",
    "DiffusionSampler",
    "ExperimentConfig",
    "ExperimentReport",
    "MultimodalityConfig",
    "MultistartSampler",
    "ReportRow",
    "RuntimeSettings",
    "TheoremBoundParams",
    "ToyProblem",
    "build_config",
    "controller_factories",
    "load_config",
    "loglog_slope",
    "multimodality_curves",
    "multimodality_percentage",
    "run_ablation",
    "run_comparison",
    "theorem1_coverage_check",
    "theorem2_check",
]

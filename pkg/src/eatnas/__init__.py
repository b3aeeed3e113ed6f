"""Evolutionary neural architecture search with elastic architecture transfer.

A block-coded mobile-CNN search space, a Pareto-style model score with a
population-quality convergence criterion, tournament-selection evolution,
Net2Net-style width/depth parameter sharing, and a two-stage transfer driver
that seeds a large-task search with perturbations of the best small-task
architecture. Fitness evaluators are pluggable: a deterministic synthetic
landscape for desk-scale experiments, or an external trainer worker over a
newline-delimited JSON protocol.
"""

from .evaluators import (
    EvalBudget,
    EvalResult,
    ExternalEvaluator,
    LandscapeConfig,
    SyntheticEvaluator,
    synthetic_accuracy,
)
from .evolution import EvolutionConfig, EvolutionEngine, ModelRecord, Population
from .metrics import arch_multadds, arch_params, resolve_channel_plan
from .perturb import mutate, perturb, seed_population
from .scoring import QualityParams, ScoreParams, model_score, population_quality
from .space import (
    ArchCode,
    BlockCode,
    ConvOp,
    SearchSpaceConfig,
    decode,
    encode,
    large_task_space,
    random_arch,
    small_task_space,
    total_expansion_ratio,
    total_layers,
    validate,
)
from .transfer import EatResult, TransferConfig, run_eat, run_from_scratch
from .weights import (
    BlockWeights,
    LayerSignature,
    ParamMatrix,
    WeightInitSpec,
    WeightStore,
    derive_weights,
    share_depth,
    share_width,
)

__version__ = "0.1.0"

__all__ = [
    "ArchCode",
    "BlockCode",
    "BlockWeights",
    "ConvOp",
    "EatResult",
    "EvalBudget",
    "EvalResult",
    "EvolutionConfig",
    "EvolutionEngine",
    "ExternalEvaluator",
    "LandscapeConfig",
    "LayerSignature",
    "ModelRecord",
    "ParamMatrix",
    "Population",
    "QualityParams",
    "ScoreParams",
    "SearchSpaceConfig",
    "SyntheticEvaluator",
    "TransferConfig",
    "WeightInitSpec",
    "WeightStore",
    "arch_multadds",
    "arch_params",
    "decode",
    "derive_weights",
    "encode",
    "large_task_space",
    "model_score",
    "mutate",
    "perturb",
    "population_quality",
    "random_arch",
    "resolve_channel_plan",
    "run_eat",
    "run_from_scratch",
    "seed_population",
    "share_depth",
    "share_width",
    "small_task_space",
    "synthetic_accuracy",
    "total_expansion_ratio",
    "total_layers",
    "validate",
]

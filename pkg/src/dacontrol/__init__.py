"""Deterministic-annealing optimization of decentralized controller mappings."""

from .engine import (
    AnnealTrace,
    ControlProblem,
    LocalModel,
    RandomizedController,
    Schedule,
    TraceRecord,
    anneal,
    duplicate_and_perturb,
    entropy,
    finite_difference_gradients,
    free_energy,
    gibbs_update,
    log_partition,
    merge_models,
    optimize_at_temperature,
    quench,
)
from .errors import InvalidParameterError, NumericError, UnreachableTargetError
from .quadrature import QuadratureGrid, build_grid, expect, gaussian_pdf
from .side_channel import (
    PairedLocalModel,
    SideChannelParams,
    SideChannelProblem,
    SweepResult,
    best_affine_cost_at_power,
    best_affine_lagrangian_cost,
    sweep_lambda,
)
from .witsenhausen import (
    MappingEvaluation,
    TabulatedEstimator,
    WceParams,
    WitsenhausenProblem,
    best_affine_cost,
    count_steps,
    evaluate_mapping,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AnnealTrace",
    "ControlProblem",
    "LocalModel",
    "RandomizedController",
    "Schedule",
    "TraceRecord",
    "anneal",
    "duplicate_and_perturb",
    "entropy",
    "finite_difference_gradients",
    "free_energy",
    "gibbs_update",
    "log_partition",
    "merge_models",
    "optimize_at_temperature",
    "quench",
    "InvalidParameterError",
    "NumericError",
    "UnreachableTargetError",
    "QuadratureGrid",
    "build_grid",
    "expect",
    "gaussian_pdf",
    "PairedLocalModel",
    "SideChannelParams",
    "SideChannelProblem",
    "SweepResult",
    "best_affine_cost_at_power",
    "best_affine_lagrangian_cost",
    "sweep_lambda",
    "MappingEvaluation",
    "TabulatedEstimator",
    "WceParams",
    "WitsenhausenProblem",
    "best_affine_cost",
    "count_steps",
    "evaluate_mapping",
]

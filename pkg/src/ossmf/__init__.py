"""Online simplex-structured matrix factorization.

Streams observations one at a time, keeps a minimum-volume enclosing simplex
up to date with warm-started solves on a small set of informative
observations, and ships the pieces needed to evaluate it: a synthetic data
generator, constrained least-squares coefficients and spectral-angle metrics.
"""
from .datagen import Dataset, DatasetSpec, generate
from .engine import EngineState, StepReport, new_engine, step
from .geometry import ContractError, SimplexChart, ToleranceConfig
from .mvcu import MvcuConfig, MvcuResult
from .runner import RunConfig, RunResult, run

__all__ = [
    "ContractError",
    "Dataset",
    "DatasetSpec",
    "EngineState",
    "MvcuConfig",
    "MvcuResult",
    "RunConfig",
    "RunResult",
    "SimplexChart",
    "StepReport",
    "ToleranceConfig",
    "generate",
    "new_engine",
    "run",
    "step",
]

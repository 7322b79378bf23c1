"""Batch multi-objective Bayesian optimization over discrete candidate pools."""

from .acquisition import (
    AcquisitionResult,
    constrained_qpmhi,
    estimate_qpmhi,
    estimate_qpo,
    select_batch,
)
from .bench import BenchSpec, make_ablation_pool, run_bench
from .campaign import (
    CampaignConfig,
    CampaignError,
    CampaignState,
    build_initial_data,
    init_campaign,
    load_checkpoint,
    run,
    save_checkpoint,
)
from .generation import Candidate, Dataset, GeneratorConfig, load_pool, propose_pool
from .gp import GpConfig, fit, pool_posterior
from .oracles import OracleError, make_oracle
from .pareto import ParetoFront, build_front, hvi_many, update_front

__version__ = "0.1.0"

__all__ = [
    "AcquisitionResult",
    "BenchSpec",
    "CampaignConfig",
    "CampaignError",
    "CampaignState",
    "Candidate",
    "Dataset",
    "GeneratorConfig",
    "GpConfig",
    "OracleError",
    "ParetoFront",
    "build_front",
    "build_initial_data",
    "constrained_qpmhi",
    "estimate_qpmhi",
    "estimate_qpo",
    "fit",
    "hvi_many",
    "init_campaign",
    "load_checkpoint",
    "load_pool",
    "make_ablation_pool",
    "make_oracle",
    "pool_posterior",
    "propose_pool",
    "run",
    "run_bench",
    "save_checkpoint",
    "select_batch",
    "update_front",
]

"""Desk-scale laboratory for communication-efficient training across
simulated wide-area links."""

from . import (
    algos, data, harness, models, numerics, psync, rng, skewscout, wansim,
)
from .harness import (
    ExperimentConfig, RunResult, config_from_dict, load_config,
    run_experiment, save_run, validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "algos", "data", "harness", "models", "numerics", "psync", "rng",
    "skewscout", "wansim",
    "ExperimentConfig", "RunResult", "config_from_dict", "load_config",
    "run_experiment", "save_run", "validate_config",
]

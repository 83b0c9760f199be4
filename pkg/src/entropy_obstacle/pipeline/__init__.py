"""Configuration, data sequences, experiment drivers and the command line."""

from .config import ConfigError, ExperimentConfig, builtin_configs, load_config, parse_config
from .experiments import (
    ConvergenceReport,
    RefinementReport,
    StabilityAborted,
    run_refinement,
    run_solve,
    run_stability,
    run_verify,
)
from .sequences import ApproxSequence, SpikeData, build_sequence

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "builtin_configs",
    "load_config",
    "parse_config",
    "ConvergenceReport",
    "RefinementReport",
    "StabilityAborted",
    "run_refinement",
    "run_solve",
    "run_stability",
    "run_verify",
    "ApproxSequence",
    "SpikeData",
    "build_sequence",
]

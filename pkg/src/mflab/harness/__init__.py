"""Experiment configs, the runner and the command line interface."""

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, config_hash, default_config, load_config, parse_config
from .experiments import ArtifactMismatchError, joint_limit_bound, joint_limit_gamma
from .runner import ExperimentReport, emit_plots, read_metrics, run_experiment, verdicts_from_metrics

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "config_hash",
    "default_config",
    "load_config",
    "parse_config",
    "ArtifactMismatchError",
    "joint_limit_bound",
    "joint_limit_gamma",
    "ExperimentReport",
    "emit_plots",
    "read_metrics",
    "run_experiment",
    "verdicts_from_metrics",
]

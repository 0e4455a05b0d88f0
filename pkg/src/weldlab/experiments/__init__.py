"""Registered experiments and the entry point that runs one from a config."""

from weldlab.experiments.core import (
    ConfigError,
    Criterion,
    Experiment,
    ExperimentConfig,
    Report,
    UnknownExperiment,
    make_config,
    parse_flat,
    plot_series,
    run_config,
)
from weldlab.experiments.registry import REGISTRY, get, names


def run_experiment(config: ExperimentConfig) -> Report:
    return run_config(get(config.name), config)


__all__ = [
    "REGISTRY",
    "ConfigError",
    "Criterion",
    "Experiment",
    "ExperimentConfig",
    "Report",
    "UnknownExperiment",
    "get",
    "make_config",
    "names",
    "parse_flat",
    "plot_series",
    "run_config",
    "run_experiment",
]

"""Experiment orchestration: configuration, multi-run execution, grid search, plot data."""
from .config import ExperimentConfig, load_config, parse_config
from .runner import (ExperimentResult, GridResult, Setup, build_setup, emit_plot_data, grid_search,
                     make_spec, run_experiment, with_params)

__all__ = ["ExperimentConfig", "ExperimentResult", "GridResult", "Setup", "build_setup", "emit_plot_data",
           "grid_search", "load_config", "make_spec", "parse_config", "run_experiment", "with_params"]

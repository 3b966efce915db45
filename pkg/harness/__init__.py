"""Experiment harness: configs, the experiment matrix runner, reports and the CLI."""

from .config_loader import load_experiment_config, profile_config
from .experiment_runner import ExperimentRunner, run_experiment
from .reporting import compute_rates, emit_csv, emit_rank_svg, emit_series_csv

__all__ = [
    'ExperimentRunner',
    'compute_rates',
    'emit_csv',
    'emit_rank_svg',
    'emit_series_csv',
    'load_experiment_config',
    'profile_config',
    'run_experiment',
]

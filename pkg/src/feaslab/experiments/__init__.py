"""Config-driven Monte Carlo experiments and their file outputs."""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .output import OutputError, write_outputs
from .runner import ExperimentResult, SolverFailure, TrialRecord, run

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentResult", "OutputError", "SolverFailure",
           "TrialRecord", "config_from_dict", "load_config", "run", "write_outputs"]

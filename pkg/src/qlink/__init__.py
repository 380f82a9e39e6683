"""Discrete-event simulator of quantum link bootstrapping between two
repeater nodes: heralded entanglement generation, distributed rule-based
protocol execution, recurrent purification and link-level tomography."""

from .config import ExperimentConfig, load_config
from .trial import TrialResult, run_trial, run_trials

__all__ = ["ExperimentConfig", "TrialResult", "load_config", "run_trial", "run_trials"]
__version__ = "0.1.0"

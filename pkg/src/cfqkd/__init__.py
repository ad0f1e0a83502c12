"""Counterfactual QKD under lossy channels and a polarization-splitting-measurement attack."""
from .config import Adversary, StrategyConfig
from .engine import simulate
from .protocol import ClickStats, RoundRecord, key_mismatch_rate, run_experiment, run_round, sift

__version__ = "0.1.0"

__all__ = [
    "Adversary",
    "ClickStats",
    "RoundRecord",
    "StrategyConfig",
    "key_mismatch_rate",
    "run_experiment",
    "run_round",
    "sift",
    "simulate",
]

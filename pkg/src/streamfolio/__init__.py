"""Streamliner and model portfolio search for the balanced academic curriculum problem."""
from __future__ import annotations

__version__ = "0.1.0"

from .bacp import BacpInstance, BacpSolution, load_instance, save_instance
from .kernel import SolveBudget, SolveOutcome, Status, solve
from .models import DEFAULT_RECIPE, RANKED_HEURISTICS, compile_model, default_candidates
from .momcts import MctsConfig, Portfolio, multi_round
from .racing import KernelEvaluator, RaceConfig, SyntheticEvaluator, run_levels, run_race
from .streamliners import Streamliner, StreamlinerSet

__all__ = [
    "__version__",
    "BacpInstance",
    "BacpSolution",
    "load_instance",
    "save_instance",
    "SolveBudget",
    "SolveOutcome",
    "Status",
    "solve",
    "DEFAULT_RECIPE",
    "RANKED_HEURISTICS",
    "compile_model",
    "default_candidates",
    "MctsConfig",
    "Portfolio",
    "multi_round",
    "KernelEvaluator",
    "RaceConfig",
    "SyntheticEvaluator",
    "run_levels",
    "run_race",
    "Streamliner",
    "StreamlinerSet",
]

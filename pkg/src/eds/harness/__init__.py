"""Attack simulation on virtual time, trial statistics and real-clock benchmarks."""

from .scenarios import (
    SCENARIOS,
    CompositionStudy,
    Scenario,
    ScenarioResult,
    Strategy,
    run_composition_study,
    run_scenario,
)
from .stats import Summary, WelchResult, run_trials, summarize, welch

__all__ = [
    "SCENARIOS",
    "CompositionStudy",
    "Scenario",
    "ScenarioResult",
    "Strategy",
    "Summary",
    "WelchResult",
    "run_composition_study",
    "run_scenario",
    "run_trials",
    "summarize",
    "welch",
]

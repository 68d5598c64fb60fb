"""Adversarial scenario harness."""

from .audit import audit
from .runner import RunReport, World, run, run_world
from .scenario import (
    MATRIX,
    TIMEOUTS,
    InvalidScenario,
    Scenario,
    Strategy,
    adversarial_scenario,
    golden_scenario,
    load_scenario,
)

__all__ = [
    "MATRIX", "TIMEOUTS", "InvalidScenario", "RunReport", "Scenario", "Strategy", "World",
    "adversarial_scenario", "audit", "golden_scenario", "load_scenario", "run", "run_world",
]

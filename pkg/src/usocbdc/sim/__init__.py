"""Deterministic simulator, scenarios and experiments."""

from .config import ConfigInvalid, Op, SimulationConfig, parse_scenario
from .engine import InvariantViolation, MetricsSnapshot, SimulationResult, Simulator, World, run_scenario
from .scenarios import BUILTIN, builtin, random_config, random_scenario, run_builtin

__all__ = [
    "BUILTIN",
    "ConfigInvalid",
    "InvariantViolation",
    "MetricsSnapshot",
    "Op",
    "SimulationConfig",
    "SimulationResult",
    "Simulator",
    "World",
    "builtin",
    "parse_scenario",
    "random_config",
    "random_scenario",
    "run_builtin",
    "run_scenario",
]

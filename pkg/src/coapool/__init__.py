"""Diverse course-of-action pools for multi-agent operations."""
from .scenario import (
    DEPOT,
    Agent,
    CompatibilityMatrix,
    InfeasibleScenarioError,
    Scenario,
    ScenarioError,
    ScenarioFormatError,
    Task,
    completion_time,
    load_scenario,
    sample_scenario,
    save_scenario,
    travel_time,
)

__version__ = "0.1.0"

"""Assignment-aware travel-time surrogate.

Thin Python layer over the C++ core: scenario building, simulation, the
trained surrogate's rollout and the command-line pipeline.
"""

from ._core import (
    LoadError,
    Model,
    RuntimeFailure,
    Scenario,
    ScenarioConfig,
    SimConfig,
    ValidationError,
    aggregate_tt,
    build_scenario,
    grid_points,
    load_dataset,
    run_command,
    spearman,
)

__all__ = [
    "LoadError",
    "Model",
    "RuntimeFailure",
    "Scenario",
    "ScenarioConfig",
    "SimConfig",
    "ValidationError",
    "aggregate_tt",
    "build_scenario",
    "grid_points",
    "load_dataset",
    "run_command",
    "spearman",
]

__version__ = "0.1.0"

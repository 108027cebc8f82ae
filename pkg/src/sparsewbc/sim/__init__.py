"""Penalty-contact simulation and scripted scenarios."""
from .contact import ContactModel, ContactReading, Surface
from .controller import ScenarioController
from .integrator import Integrator, step, world_momentum
from .runner import SimulationLog, compare_torque_jumps, compute_metrics, export_series, run_scenario
from .scenario import Scenario, load_scenario, resolve_model, scenario_from_dict, shipped_scenarios

__all__ = [
    "ContactModel", "ContactReading", "Integrator", "Scenario", "ScenarioController", "SimulationLog",
    "Surface", "compare_torque_jumps", "compute_metrics", "export_series", "load_scenario",
    "resolve_model", "run_scenario", "scenario_from_dict", "shipped_scenarios", "step", "world_momentum",
]

"""Constrained trajectory optimization and closed-loop simulation of the
fuel-cell / battery power split in a plug-in hybrid powertrain."""

from .plant import (BatteryParams, CompressorMap, DerivedCoeffs, FcParams,
                    PlantInput, PlantModel, PlantState, Polarization,
                    VoltageCollapseError, derive_coefficients)
from .discretize import DiscreteStep, IntegrationError, step, step_with_sensitivities
from .ocp import (CONSTRAINT_ROWS, ConstraintSet, CostWeights, OcpProblem,
                  describe_constraints, evaluate_constraints, stage_cost)
from .solver import (SolveResult, SolveStatus, SolverOptions, Trajectory,
                     rollout, solve)
from .mpc import (DemandProfile, ScenarioConfig, SimLog, preview_window,
                  run_closed_loop, steady_state, sweep_qmax)
from .config import ConfigError, build_scenario, default_config, load_config

__version__ = "0.1.0"

__all__ = [
    "BatteryParams", "CompressorMap", "DerivedCoeffs", "FcParams",
    "PlantInput", "PlantModel", "PlantState", "Polarization",
    "VoltageCollapseError", "derive_coefficients",
    "DiscreteStep", "IntegrationError", "step", "step_with_sensitivities",
    "CONSTRAINT_ROWS", "ConstraintSet", "CostWeights", "OcpProblem",
    "describe_constraints", "evaluate_constraints", "stage_cost",
    "SolveResult", "SolveStatus", "SolverOptions", "Trajectory",
    "rollout", "solve",
    "DemandProfile", "ScenarioConfig", "SimLog", "preview_window",
    "run_closed_loop", "steady_state", "sweep_qmax",
    "ConfigError", "build_scenario", "default_config", "load_config",
]

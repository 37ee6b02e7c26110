"""Robust minmax MPC for a standalone droop-controlled microgrid with adaptive droop gains."""
from .model import (ADAPTIVE, FIXED, ControlInput, ForecastBounds, GainMode, InitialConditions,
                    MgParams, ModelError, build_mpc_problem, extract_control, solve_mpc,
                    validate_mpc_solution)
from .forecast import (ForecastError, ScenarioSet, SeasonalModel, TimeSeries,
                       bounds_from_scenarios, fit_seasonal_model, load_history_csv,
                       sample_scenarios, synthetic_profiles)
from .oracle import OracleError, OracleResult, grid_oracle
from .sim import (Metrics, PlantState, RealizedStep, SimConfig, SimError, SimLog, metrics,
                  plant_step, run_closed_loop, run_compare)
from .solver import MiblpProblem, MiblpSolution, SolveOptions, solve, validate_solution

__version__ = "0.1.0"

__all__ = [
    "ADAPTIVE", "FIXED", "ControlInput", "ForecastBounds", "ForecastError", "GainMode",
    "InitialConditions", "Metrics", "MgParams", "MiblpProblem", "MiblpSolution", "ModelError",
    "OracleError", "OracleResult", "PlantState", "RealizedStep", "ScenarioSet", "SeasonalModel",
    "SimConfig", "SimError", "SimLog", "SolveOptions", "TimeSeries", "bounds_from_scenarios",
    "build_mpc_problem", "extract_control", "fit_seasonal_model", "grid_oracle",
    "load_history_csv", "metrics", "plant_step", "run_closed_loop", "run_compare",
    "sample_scenarios", "solve", "solve_mpc", "synthetic_profiles", "validate_mpc_solution",
    "validate_solution",
]

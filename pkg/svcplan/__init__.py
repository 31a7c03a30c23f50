from .network import NetworkCase, Scenario, ScenarioSet, build_scenarios
from .case_reader import ieee30_case, load_case, load_scenarios, parse_case
from .program import ConicProgram, ConeKind
from .micp import SvcSpec, WeightScheme, build_micp
from .conic import SolverSettings, SolveStatus, solve, solve_with_fixings
from .bnb import AllocationResult, BnbSettings, enumerate_placements, evaluate_allocation, solve_misocp
from .acpf import newton_raphson, validate
from .planner import RunConfig, RunReport, run
from .settings import DEFAULT_ALPHA, DEFAULT_EPS_THETA

__all__ = [
    "NetworkCase",
    "Scenario",
    "ScenarioSet",
    "build_scenarios",
    "ieee30_case",
    "load_case",
    "load_scenarios",
    "parse_case",
    "ConicProgram",
    "ConeKind",
    "SvcSpec",
    "WeightScheme",
    "build_micp",
    "SolverSettings",
    "SolveStatus",
    "solve",
    "solve_with_fixings",
    "AllocationResult",
    "BnbSettings",
    "enumerate_placements",
    "evaluate_allocation",
    "solve_misocp",
    "newton_raphson",
    "validate",
    "RunConfig",
    "RunReport",
    "run",
    "DEFAULT_ALPHA",
    "DEFAULT_EPS_THETA",
]

"""Current-injection power flow with a factor-once Jacobian for PMU-observed PV buses."""

__version__ = "0.1.0"

from .caseio import SolutionReport, load_case, parse_cdf, parse_native, read_case, serialize, write_solution
from .estimator import PowerFlow
from .model import Branch, BranchKind, Bus, BusKind, Generator, Load, NetworkCase, assemble_ybus, validate_case
from .pmu import PmuScenario, error_metrics, simulate_pmu, table_iv_experiment
from .solvers import (
    Method,
    SolverOptions,
    pv_angles,
    solve,
    solve_ci_linear,
    solve_ci_newton,
    solve_ci_pmu,
    solve_conventional_nr,
)

__all__ = [
    "Branch", "BranchKind", "Bus", "BusKind", "Generator", "Load", "Method", "NetworkCase", "PmuScenario",
    "PowerFlow", "SolutionReport", "SolverOptions", "assemble_ybus", "error_metrics", "load_case",
    "parse_cdf", "parse_native", "pv_angles", "read_case", "serialize", "simulate_pmu", "solve", "solve_ci_linear",
    "solve_ci_newton", "solve_ci_pmu", "solve_conventional_nr", "table_iv_experiment", "validate_case",
    "write_solution",
]

"""Optimal claim reporting in a two-class bonus-malus contract.

Solves the coupled reporting-control PIDE system for the value function,
extracts the optimal barrier strategy, and validates both against an
exact event-driven Monte Carlo simulator of the underlying process.
"""
from .model import ClaimLaw, DomainError, ModelParams, PremiumSpec, UtilitySpec, retention
from .grid import (
    BarrierField,
    Grid,
    GridError,
    GridSpec,
    ValueField,
    apply_boundary,
    build_grid,
    interp_x,
)
from .solver import (
    ConvergenceError,
    NumericsError,
    SolveControl,
    SolveResult,
    SolverError,
    iterate,
    jump_operator,
    optimal_jump_operator,
    sweep_characteristic,
)
from .simulator import (
    MCResult,
    PathRecord,
    PolicySpec,
    compare_policies,
    dpp_residual,
    estimate_value,
    sample_path,
)
from .config import ConfigError, MCSpec, RunSpec, load_config, parse_config, serialize
from .figures import run_figures
from .checks import CheckContext, CheckResult, run_check

__version__ = "0.1.0"

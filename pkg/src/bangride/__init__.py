"""Monotone optimal control: bang-ride selector policies, PID-selector, oracles and battery models."""

from .battery import EcmParams, SpmParams, build_ecm, build_spm, paper_ecm_scenario
from .checks import (
    AssumptionReport,
    check_linear_assumptions,
    impulse_response,
    is_decreasing,
    lift_output,
    probe_nonlinear_monotonicity,
    relative_degree,
)
from .core import LinearSystem, NonlinearSystem, Problem, Trajectory, check_feasible, evaluate_cost, simulate
from .oracle import GridSpec, counterexample_gap, greedy_maximal, grid_oracle, verify_bangride
from .pid import PidBank, PidGains, pid_bank_step, pid_candidate, run_pid_selector
from .selector import SelectorPolicy, selector_gain_linear, selector_policy, run_selector, solve_constraint_equation

__version__ = "0.1.0"

"""Simulator for speed scaling parallelizable jobs under a sum-power budget."""

from .analysis import (
    batch_constants,
    check_boundary_jumps,
    check_running_condition,
    empirical_cr,
    online_constants,
    online_feasible,
    phi_online,
    phi_sf,
)
from .engine import CoupledTraces, Trace, simulate, simulate_coupled
from .metrics import energy, flow_time, objective, report
from .model import Job, PowerModel, ProblemVariant, SpeedAssignment, SystemSnapshot
from .policies import PolicySpec, decide
from .workloads import Workload, gen_batch, gen_slotted_poisson, load_workload, save_workload

__version__ = "0.1.0"

__all__ = [
    "batch_constants", "check_boundary_jumps", "check_running_condition", "empirical_cr",
    "online_constants", "online_feasible", "phi_online", "phi_sf",
    "CoupledTraces", "Trace", "simulate", "simulate_coupled",
    "energy", "flow_time", "objective", "report",
    "Job", "PowerModel", "ProblemVariant", "SpeedAssignment", "SystemSnapshot",
    "PolicySpec", "decide",
    "Workload", "gen_batch", "gen_slotted_poisson", "load_workload", "save_workload",
]

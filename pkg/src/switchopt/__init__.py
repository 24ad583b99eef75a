"""Continuous-time resource-allocation dynamics under dwell-time
constrained objective switching, with limit-set characterization tools."""

__version__ = "0.1.0"

from .dynamics import (DampingBounds, DynamicsSpec, OptState, gradient_flow,
                       hbm_flow, hihbm_flow, kappa, project_feasible)
from .graph import LaplacianPair, build_laplacian, load_edge_list
from .hybrid import (HybridArc, HybridPoint, ScheduleError, SwitchSchedule,
                     SwitchedProblem, disturbance_inflate, generate_schedule,
                     simulate, simulate_batch, validate_schedule)
from .objectives import (KktSolution, QuadraticObjective,
                         SwitchedObjectiveFamily, kkt_solve, lyapunov,
                         sample_family)
from .omega import (PointCloud, distance_to_cloud, practical_stability_sweep,
                    sample_omega)

__all__ = [
    "DampingBounds", "DynamicsSpec", "OptState", "gradient_flow", "hbm_flow",
    "hihbm_flow", "kappa", "project_feasible",
    "LaplacianPair", "build_laplacian", "load_edge_list",
    "HybridArc", "HybridPoint", "ScheduleError", "SwitchSchedule",
    "SwitchedProblem", "disturbance_inflate", "generate_schedule", "simulate",
    "simulate_batch", "validate_schedule",
    "KktSolution", "QuadraticObjective", "SwitchedObjectiveFamily",
    "kkt_solve", "lyapunov", "sample_family",
    "PointCloud", "distance_to_cloud", "practical_stability_sweep",
    "sample_omega",
]

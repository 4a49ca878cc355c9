"""Time-optimal trajectory planning with an iterative active/inactive obstacle set."""

from .dynamics import PointMass2D, QuadParams, Quadrotor, make_model, mix_rotors, rk4_jacobians, rk4_step, rollout
from .planner import ActiveSet, PlanReport, SolveCache, feasibility_check, plan, plan_baseline, validate_solution
from .scenario import Scenario, generate_scenario, load_scenario, load_trajectory, save_scenario, save_trajectory
from .solver import SolveResult, SolverOptions, kkt_report, solve
from .transcription import Margins, Obstacle, Trajectory, build_nlp, initial_guess

__version__ = "0.1.0"

__all__ = [
    "ActiveSet", "Margins", "Obstacle", "PlanReport", "PointMass2D", "QuadParams", "Quadrotor",
    "Scenario", "SolveCache", "SolveResult", "SolverOptions", "Trajectory", "build_nlp",
    "feasibility_check", "generate_scenario", "initial_guess", "kkt_report", "load_scenario",
    "load_trajectory", "make_model", "mix_rotors", "plan", "plan_baseline", "rk4_jacobians",
    "rk4_step", "rollout", "save_scenario", "save_trajectory", "solve", "validate_solution",
]

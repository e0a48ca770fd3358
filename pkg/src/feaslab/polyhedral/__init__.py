"""Recourse cones, Farkas feasibility and the simplex LP oracle."""

from .farkas import (UnboundedRecourseError, farkas_feasible, phase1_feasible,
                     second_stage_solution, second_stage_value)
from .rays import (ConeGenerators, ConeSizeError, DegenerateInputError, enumerate_rays,
                   in_cone, in_generated_cone, is_minimal)
from .simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, LPError, LPProblem, LPResult,
                      constraint_residual, lp_solve)

__all__ = [
    "ConeGenerators", "ConeSizeError", "DegenerateInputError", "INFEASIBLE", "LPError",
    "LPProblem", "LPResult", "OPTIMAL", "UNBOUNDED", "UnboundedRecourseError",
    "constraint_residual", "enumerate_rays", "farkas_feasible", "in_cone",
    "in_generated_cone", "is_minimal", "lp_solve", "phase1_feasible",
    "second_stage_solution", "second_stage_value",
]

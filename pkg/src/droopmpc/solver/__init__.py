"""Mixed-integer bilinear solver: problem container, dual simplex, branch and bound."""
from .bnb import (MiblpSolution, SolveOptions, dumps_solution, loads_solution, solve,
                  solve_lp_relaxation)
from .lp import LinearProgram, LpSolution, WarmStart, lp_solve
from .problem import (BINARY, CONTINUOUS, BilinearLink, LinearConstraint, MiblpProblem,
                      ProblemError, QuadAtom, ViolationReport, dump_problem, dumps_problem,
                      load_problem, loads_problem, max_bilinear_residual, validate_solution)
from .relax import mccormick_cuts, tangent_row

__all__ = [
    "BINARY", "CONTINUOUS", "BilinearLink", "LinearConstraint", "LinearProgram", "LpSolution",
    "MiblpProblem", "MiblpSolution", "ProblemError", "QuadAtom", "SolveOptions",
    "ViolationReport", "WarmStart", "dump_problem", "dumps_problem", "dumps_solution", "load_problem",
    "loads_problem", "loads_solution", "lp_solve", "max_bilinear_residual", "mccormick_cuts", "solve",
    "solve_lp_relaxation", "tangent_row", "validate_solution",
]

"""Local and multi-start OCP solvers."""
from .local import (
    AllSolvesDiverged,
    MultistartResult,
    SolveDiverged,
    SolveResult,
    SolverConfig,
    project_box,
    projected_gradient_norm,
    shift_warm_start,
    solve_local,
    solve_multistart,
)

__all__ = [
    "AllSolvesDiverged",
    "MultistartResult",
    "SolveDiverged",
    "SolveResult",
    "SolverConfig",
    "project_box",
    "projected_gradient_norm",
    "shift_warm_start",
    "solve_local",
    "solve_multistart",
]

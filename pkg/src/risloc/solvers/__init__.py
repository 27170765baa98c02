"""Scenario solvers and the generic least-squares refiner."""

from .core import (
    Candidate,
    HalfLine,
    InfeasibleError,
    NonIdentifiableError,
    NonIdentifiableWarning,
    SolveRequest,
    SolveResult,
    SolverError,
    refine,
    solve_orientation,
    solve_two_halflines,
    solve_velocity,
)
from .scenarios import (
    simo_position_candidates,
    solve,
    solve_halflines,
    solve_simo_aoa,
    solve_siso_1ris_0bs,
    solve_siso_1ris_1bs,
    solve_tdoa_4bs,
)
from .nearfield import nf_position_from_curvature

"""Finite element solver for quasi-incompressible two-phase flow with moving contact lines.

The scheme couples a Cahn-Hilliard phase field with a variable-density
Navier-Stokes system and a generalized Navier slip condition on the walls.
Discrete mass and energy laws hold exactly once the Picard loop converges.
"""

from .errors import (ConfigError, InvalidArgument, IOFailure, NonConvergence, NotFound,
                     NumericalFailure, QnschError, UndefinedDiagnostic)
from .mesh import Mesh, generate_rect_mesh, locate_point
from .fem import FunctionSpace, QuadratureRule, quadrature, shape_eval
from .constitutive import Parameters
from .assembly import BlockSystem, Discretization, FieldState, apply_gauge, assemble
from .timestepper import LinearSolver, StepStats, advance, initialize_state, linear_solve
from .diagnostics import DiagnosticsRecord
from .scenarios import Scenario, convergence_study, eps_sweep, preset, run

__version__ = "0.1.0"

__all__ = [
    "BlockSystem", "ConfigError", "DiagnosticsRecord", "Discretization", "FieldState",
    "FunctionSpace", "IOFailure", "InvalidArgument", "LinearSolver", "Mesh", "NonConvergence",
    "NotFound", "NumericalFailure", "Parameters", "QnschError", "QuadratureRule", "Scenario",
    "StepStats", "UndefinedDiagnostic", "advance", "apply_gauge", "assemble", "convergence_study",
    "eps_sweep", "generate_rect_mesh", "initialize_state", "linear_solve", "locate_point",
    "preset", "quadrature", "run", "shape_eval",
]

"""Multiscale generalized finite elements for 2D linear elasticity.

P1 elements on uniform triangulations of the unit square, a quasi-interpolation
onto the coarse mesh, and localized element correctors that build a multiscale
basis whose Galerkin solutions converge at the coarse rate independently of
coefficient oscillation and of the incompressibility parameter.
"""

from .fem import (
    CoefficientField,
    DofMap,
    ProblemSpec,
    assemble_stiffness,
    relative_h1_error,
    solve_fem,
)
from .interpolation import build_interpolation
from .lod import (
    SystemContext,
    build_corrector_set,
    localization_schedule,
    measure_corrector_decay,
    multiscale_basis,
    solve_gfem,
)
from .mesh import BoundarySpec, build_uniform_mesh, element_patch, refine_to
from .problems import (
    brenner_benchmark,
    constant_coefficients,
    random_checkerboard,
    read_coefficient_text,
    unit_body_force_problem,
    write_coefficient_text,
)

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "CoefficientField",
    "DofMap",
    "ProblemSpec",
    "SystemContext",
    "assemble_stiffness",
    "brenner_benchmark",
    "build_corrector_set",
    "build_interpolation",
    "build_uniform_mesh",
    "constant_coefficients",
    "element_patch",
    "localization_schedule",
    "measure_corrector_decay",
    "multiscale_basis",
    "random_checkerboard",
    "read_coefficient_text",
    "refine_to",
    "relative_h1_error",
    "solve_fem",
    "solve_gfem",
    "unit_body_force_problem",
    "write_coefficient_text",
]

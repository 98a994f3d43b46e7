"""Adaptive HDG solver for Neumann boundary control with box constraints.

Typical use::

    from hdgcontrol import example1, afem_run
    result = afem_run(example1(), k=1, theta=0.6, budget=30_000)
"""
from .adaptivity import AfemError, AfemRecord, AfemResult, afem_run, loglog_slope, mark, trace_dofs
from .control import (ControlBounds, FixedPointConfig, FixedPointError, OptimalitySolution,
                      control_update, project_admissible, solve_optimality)
from .discretization import ElementBasis, Space, integrate, project_element, project_face
from .estimator import EstimatorBreakdown, ErrorReport, estimate, oscillations, true_error
from .hdg import (ConfigurationError, HdgField, HdgOperator, HdgOperatorConfig, SolverError,
                  bilinear_form, condense, solve_trace)
from .mesh import (MeshError, TriMesh, conformity_defects, element_geometry, make_mesh,
                   refine_nvb, uniform_refine)
from .problems import (ExactSolution, ProblemSpec, example1, example2, get_problem,
                       lshape_mesh, square_mesh, verify_manufactured)

__version__ = "0.1.0"

__all__ = [
    "AfemError", "AfemRecord", "AfemResult", "afem_run", "loglog_slope", "mark", "trace_dofs",
    "ControlBounds", "FixedPointConfig", "FixedPointError", "OptimalitySolution",
    "control_update", "project_admissible", "solve_optimality",
    "ElementBasis", "Space", "integrate", "project_element", "project_face",
    "EstimatorBreakdown", "ErrorReport", "estimate", "oscillations", "true_error",
    "ConfigurationError", "HdgField", "HdgOperator", "HdgOperatorConfig", "SolverError",
    "bilinear_form", "condense", "solve_trace",
    "MeshError", "TriMesh", "conformity_defects", "element_geometry", "make_mesh",
    "refine_nvb", "uniform_refine",
    "ExactSolution", "ProblemSpec", "example1", "example2", "get_problem",
    "lshape_mesh", "square_mesh", "verify_manufactured",
]

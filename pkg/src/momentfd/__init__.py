"""Finite-difference solvers with numerical-moment stabilization.

Central-difference schemes for stationary reaction-convection-diffusion
and Hamilton-Jacobi equations on uniform d-rectangle grids (d = 1, 2),
with monotone baselines (upwind, Lax-Friedrichs) for comparison.
"""

__version__ = "0.1.0"

from .analysis import (
    ErrorRecord,
    RegimeKind,
    RootRegime,
    characteristic_regime,
    error_records,
    error_records_csv,
    eta_coefficients,
    linf_error,
    matrix_diagnostics,
    observed_orders,
    weighted_l2_error,
)
from .grid import (
    DRectangle,
    Grid,
    GridError,
    GridFunction,
    NodeClass,
    NodeKind,
    build_grid,
    classify_node,
    enumerate_ghosts,
)
from .operators import (
    DIRICHLET_ROWS,
    NEUMANN_ROWS,
    OperatorError,
    SparseOperator,
    StencilDomainError,
    StencilKind,
    apply_stencil,
    assemble,
    moment_matrix,
)
from .problems import (
    ExampleId,
    HJProblem,
    LinearProblem,
    ProblemError,
    SmoothField,
    example_description,
    example_domain,
    example_names,
    get_example,
    manufactured_forcing,
)
from .schemes import (
    BC,
    Family,
    SchemeConfig,
    SchemeError,
    assemble_linear_system,
    ghost_fill,
    residual,
    scheme_from_name,
    stabilizer_matrix,
)
from .solvers import (
    ContinuationLadder,
    DivergenceError,
    FixedPointConfig,
    SingularSystemError,
    SolveReport,
    SolverError,
    UnsupportedAnalysisError,
    contraction_constants,
    default_ladder,
    fixed_point_map,
    fixed_point_solve,
    newton_continuation_solve,
    solve_direct,
)

__all__ = [
    "BC",
    "ContinuationLadder",
    "DIRICHLET_ROWS",
    "DRectangle",
    "DivergenceError",
    "ErrorRecord",
    "ExampleId",
    "Family",
    "FixedPointConfig",
    "Grid",
    "GridError",
    "GridFunction",
    "HJProblem",
    "LinearProblem",
    "NEUMANN_ROWS",
    "NodeClass",
    "NodeKind",
    "OperatorError",
    "ProblemError",
    "RegimeKind",
    "RootRegime",
    "SchemeConfig",
    "SchemeError",
    "SingularSystemError",
    "SmoothField",
    "SolveReport",
    "SolverError",
    "SparseOperator",
    "StencilDomainError",
    "StencilKind",
    "UnsupportedAnalysisError",
    "__version__",
    "apply_stencil",
    "assemble",
    "assemble_linear_system",
    "build_grid",
    "characteristic_regime",
    "classify_node",
    "contraction_constants",
    "default_ladder",
    "enumerate_ghosts",
    "error_records",
    "error_records_csv",
    "eta_coefficients",
    "example_description",
    "example_domain",
    "example_names",
    "fixed_point_map",
    "fixed_point_solve",
    "get_example",
    "ghost_fill",
    "linf_error",
    "manufactured_forcing",
    "matrix_diagnostics",
    "moment_matrix",
    "newton_continuation_solve",
    "observed_orders",
    "residual",
    "scheme_from_name",
    "solve_direct",
    "stabilizer_matrix",
    "weighted_l2_error",
]

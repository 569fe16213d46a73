"""Numerical laboratory for fully nonlinear elliptic equations with quadratic gradient terms."""
from .field import (
    Grid,
    GridError,
    MatrixField,
    ScalarField,
    boundary_max,
    field_from_csv,
    field_to_csv,
    lp_norm,
    make_grid,
    sup_norm,
)
from .ops import (
    BoundaryMismatch,
    ExponentPlan,
    PucciParams,
    ProblemSpec,
    make_spec,
    pucci_exact,
    pucci_fd,
    quad_form,
    residual,
    resolve_exponents,
)

__version__ = "0.1.0"

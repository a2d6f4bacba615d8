"""obstlab: a finite-difference laboratory for the double obstacle problem.

Solves the bilateral complementarity problem 0 <= u <= psi with
Delta u = f on the open region, and computes the energy and monotonicity
functionals (Weiss, ACF, thickness, non-degeneracy, directional
monotonicity) together with blowup and free-boundary C1 diagnostics.
"""

from .grid import (
    Grid,
    ScalarField,
    VectorField,
    DomainError,
    QuadratureError,
    sample,
    laplacian,
    gradient,
    interp,
    interp_vector,
    ball_integral,
    sphere_integral,
    field_to_csv,
    field_from_csv,
)
from .exact import (
    ClosedForm,
    PiecewiseQuadratic1D,
    ExactSolution1D,
    OracleFailure,
    zero,
    affine,
    constant,
    quadratic,
    halfspace,
    model_psi,
    piecewise_1d,
    eval_form,
    second_derivative_sup,
    solve_1d_exact,
)
from .solver import (
    Problem,
    SolverConfig,
    PartitionMask,
    SolveReport,
    ValidationError,
    ConvergenceError,
    ZERO,
    OPEN,
    CONTACT,
    UNRESOLVED,
    default_eps_mask,
    solve,
    classify,
    residuals,
    d2_sup,
    d2_sup_study,
    discrete_energy,
    measure_fraction_gamma,
)
from .analysis import (
    FunctionalSeries,
    BlowupStudy,
    rescale,
    thickness,
    weiss,
    weiss_series,
    weiss_derivative_check,
    acf,
    acf_series,
    nondegeneracy_check,
    directional_check,
    blowup_study,
    zero_set_points,
)
from .freeboundary import (
    FreeBoundaryCurve,
    GraphFit,
    NotAGraphError,
    extract,
    normals,
    lipschitz_fit,
    c1_diagnostic,
    gamma_d_events,
)

__version__ = "0.1.0"

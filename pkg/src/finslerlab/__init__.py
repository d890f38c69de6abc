"""finslerlab: numerical Finsler metric-measure geometry on chart domains.

Metric families (Euclidean, Riemannian, Randers, conformal rescalings) with
exact Taylor-jet differentiation feed a tensor pipeline (fundamental and
Cartan tensors, Chern connection, spray curvature, S-curvature, weighted and
mixed weighted Ricci, the non-Riemannian tensors T, U, div C, misalignment),
the exponentially harmonic operator suite with its Bochner and composition
identities, a variational Dirichlet solver, and the expanding-ball
gradient-estimate / Liouville-decay experiments.
"""

from . import errors
from .expressions import Expression
from .metrics import (
    Box,
    Jet,
    Measure,
    MetricSpec,
    PointFrame,
    dual_norm,
    euclidean_spec,
    eval_metric,
    fundamental_tensor,
    legendre_batch,
    legendre_dual,
    metric_jet,
    misalignment,
    randers_spec,
    riemannian_spec,
)
from .connection import (
    ConnectionFrame,
    FrameJets,
    GeodesicPath,
    chern_connection,
    horizontal_derivative,
    integrate_geodesic,
    nonlinear_connection,
    parallel_transport,
    sampled_path,
    spray_coeffs,
)
from .curvature import (
    MINUS_INFINITY,
    CurvatureReport,
    comparison_ct,
    curvature_report,
    distortion,
    div_cartan,
    flag_curvature,
    laplacian_comparison_probe,
    mixed_weighted_ricci,
    riemann_curvature,
    s_curvature,
    s_curvature_routes,
    t_tensor,
    u_tensor,
    weighted_ricci,
)
from .operators import (
    FieldJet,
    OperatorResult,
    bochner_residual,
    composition_identity,
    exp_energy,
    exp_harmonic_operator,
    finsler_hessian,
    finsler_laplacian,
    first_variation,
    nonlinear_gradient,
)
from .solver import (
    GridDomain,
    LiouvilleRecord,
    ScalarField,
    SolverConfig,
    decay_slope,
    discrete_energy_and_gradient,
    gradient_estimate_check,
    h_function,
    liouville_experiment,
    oscillating_boundary,
    solve_dirichlet,
)

__version__ = "0.1.0"

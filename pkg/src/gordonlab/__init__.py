"""gordonlab: a numerical laboratory for the cosh-Gordon and sinh-Gordon
equations, the spectral-parameter families of flat connections they induce,
and the constant-curvature 3-metrics built from them."""

from .fields import (
    ComplexField,
    Grid2D,
    GridError,
    MissingBoundaryError,
    QuadraticDifferential,
    RepresentationError,
    ScalarField,
    d_z,
    d_zbar,
    eval_quad_diff,
    integrate,
    laplace_zzbar,
    read_field_csv,
    write_field_csv,
)
from .solver import (
    EquationVariant,
    NoConvergenceError,
    ObstructionError,
    SingularJacobianError,
    SolveReport,
    default_initial_guess,
    gauss_bonnet_bound,
    inequality_check,
    isolation_check,
    linearized_operator,
    newton_solve,
    obstruction_check,
    residual,
    strip_ode_oracle,
)
from .connections import (
    ConnectionFamily,
    GaugePreconditionError,
    MonodromyResult,
    build_family,
    curvature,
    degeneracy_check,
    developing_map,
    expm2,
    extract_normal_form,
    flatness_coefficients,
    gauge_transform_u1,
    lambda_flatness_sweep,
    monodromy,
    reality_check,
    su11_check,
)
from .metrics import (
    CURVATURE_NORMALIZATION,
    ChartDomainError,
    ConstructionMismatchError,
    DegenerateMetricError,
    FundamentalForms,
    MetricSampler,
    boundary_one_form,
    calibrate_curvature_normalization,
    conformal_quadratic_metric,
    conventions,
    curvature_identity_defect,
    export_h3_mesh,
    fermi_hyperbolic_metric,
    fundamental_forms,
    gauss_curvature_2d,
    geodesic_defect,
    metric_direct,
    metric_from_connection,
    spline_of,
    symplectic_two_form,
)
from .toda import (
    CartanMatrix,
    DecompositionError,
    HoloConnectionData,
    RegionError,
    TodaReport,
    gauss_decompose,
    liouville_from_holomorphic,
    pexp,
    toda_residual,
)

__version__ = "0.1.0"

"""Equatorial Kerr-de Sitter photon orbits, pseudopole synthesis and parameter inversion."""

__version__ = "0.1.0"

from .errors import (
    DegenerateJacobian,
    DegenerateRoot,
    EmptyRegion,
    HorizonEvaluation,
    IllConditionedFit,
    KdsError,
    NearDegenerate,
    NegativeCurvature,
    NoConvergence,
    NotSubextremal,
    OutOfRange,
    OutsideAdmissible,
    SingularJacobian,
)
from .kds_core import (
    HorizonData,
    SpacetimeParams,
    equatorial_metric,
    evaluate_delta_r,
    horizon_roots,
    is_subextremal,
)
from .photon_orbit import (
    Branch,
    CircularOrbit,
    SeriesCoefficients,
    closed_form_coefficients,
    lyapunov_exponent,
    solve_circular_orbit,
    solve_circular_orbit_rb,
)
from .spectrum import (
    ModeIndex,
    NoiseSpec,
    pseudopole_pair,
    single_mode_map,
    synthesize_pseudopole,
    three_map,
    two_mode_map,
)
from .inversion import (
    NewtonOptions,
    ReconResult,
    RectangleSpec,
    closed_form_seed,
    newton_invert_three,
    newton_invert_two,
    p_matrix_rectangle_scan,
    unlabeled_invert,
)
from .verify import (
    fit_series_coefficients,
    jacobian_det_limit_check,
    lambda_minus_u_check,
    noise_propagation_study,
)

"""Numerical tools for Q-valued maps: smoothed frequency functionals, mean
flatness of discrete measures and frequency-drop coverings of the Q-point set.
"""

__version__ = "0.1.0"

from .builtin import BUILTIN_FIELDS, builtin_field, builtin_names
from .covering import (
    Ball,
    CoveringResult,
    FieldOracle,
    FrequencyOracle,
    FunctionOracle,
    Plane,
    TableOracle,
    final_cover,
    intermediate_cover,
    minkowski_content_estimate,
    minkowski_cover_driver,
    packing_verify,
    reifenberg_hypothesis_check,
    rho_linearly_independent,
    spans_k_plane,
    spine_frequency_constancy,
    telescoping_check,
    tube_fallback,
)
from .errors import (
    CoverageError,
    CoveringLogicError,
    DegenerateHeightError,
    InputError,
    ParameterError,
    ParseError,
    QValuedError,
    SingularPointError,
)
from .frequency import (
    FrequencyReport,
    dirichlet_D,
    doubling_residual,
    energy_E,
    epsilon_regularity_scan,
    frequency_I,
    frequency_profile,
    frequency_variation_check,
    height_H,
    identity_residuals,
    pinch_W,
    pinching_integral,
    smoothed_functionals,
    uniform_bound_report,
)
from .grids import RegularGrid
from .meanflat import (
    DiscreteMeasure,
    PlaneFit,
    beta_bruteforce,
    beta_k,
    dyadic_scales,
    jones_integral,
    jones_terms,
    meanflat_vs_pinching_check,
    measure_from_qpoints,
    plane_fit,
    restrict,
)
from .multifield import (
    AnalyticField,
    CylindricalExtension,
    MultiPoint,
    PlanarBranch,
    Shifted,
    balance,
    cluster_split,
    eta,
    evaluate,
    field_from_dict,
    field_to_dict,
    gradient,
    is_q_point,
    metric_distance,
    optimal_matching,
)
from .quadrature import QuadratureScheme, WeightProfile

"""Control curvature and microlocal normal forms of planar control systems q' = f(q, u)."""

from .curvature import (
    CurvatureSample,
    FeedbackTransform,
    curvature_at,
    curvature_fd,
    curvature_series_abnormal,
    curvature_series_normal,
    feedback_transform,
    gaussian_curvature_conformal,
    lie_bracket,
    random_feedback_transform,
)
from .errors import (
    ControlGeometryError,
    DefinitionError,
    ExpressionSyntaxError,
    UnknownIdentifier,
    DomainError,
    UnknownFamily,
    WrongFamily,
    RegularityError,
    SingularBasis,
    NonConvex,
    NoRoot,
    VerticalityViolated,
    DerivativeUnavailable,
    EvaluationFailed,
    StepUnderflow,
    InversionFailed,
    ChartSingular,
    NewtonFailed,
    RootFailed,
    NonPositiveArgument,
    NoConvergence,
)
from .extremal import (
    Covector,
    FiberFrame,
    Trajectory,
    extremal_field,
    fiber_frame,
    integrate_flow,
    integrate_pmp,
    maximizing_covector,
    vertical_field,
)
from .normalform import (
    NormalFormChart,
    NormalFormReport,
    TransversalCurve,
    abnormal_extension,
    build_chart,
    extract_a,
    transversal_curve,
    verify_normal_form,
)
from .regularity import (
    ConvexityData,
    RegularityReport,
    abnormal_locus,
    abnormal_locus_find,
    convexity_decomposition,
    regularity_scan,
    strong_convexity_residual,
    transversality_residual,
)
from .system import (
    ControlDomain,
    Jet,
    StatePoint,
    SystemModel,
    builtin_system,
    emit_system,
    load_system,
    parse_system,
)
from .taylor import Taylor

__version__ = "0.1.0"

__all__ = [
    "Taylor",
    "CurvatureSample",
    "FeedbackTransform",
    "curvature_at",
    "curvature_fd",
    "curvature_series_abnormal",
    "curvature_series_normal",
    "feedback_transform",
    "gaussian_curvature_conformal",
    "lie_bracket",
    "random_feedback_transform",
    "ControlGeometryError",
    "DefinitionError",
    "ExpressionSyntaxError",
    "UnknownIdentifier",
    "DomainError",
    "UnknownFamily",
    "WrongFamily",
    "RegularityError",
    "SingularBasis",
    "NonConvex",
    "NoRoot",
    "VerticalityViolated",
    "DerivativeUnavailable",
    "EvaluationFailed",
    "StepUnderflow",
    "InversionFailed",
    "ChartSingular",
    "NewtonFailed",
    "RootFailed",
    "NonPositiveArgument",
    "NoConvergence",
    "Covector",
    "FiberFrame",
    "Trajectory",
    "extremal_field",
    "fiber_frame",
    "integrate_flow",
    "integrate_pmp",
    "maximizing_covector",
    "vertical_field",
    "NormalFormChart",
    "NormalFormReport",
    "TransversalCurve",
    "abnormal_extension",
    "build_chart",
    "extract_a",
    "transversal_curve",
    "verify_normal_form",
    "ConvexityData",
    "RegularityReport",
    "abnormal_locus",
    "abnormal_locus_find",
    "convexity_decomposition",
    "regularity_scan",
    "strong_convexity_residual",
    "transversality_residual",
    "ControlDomain",
    "Jet",
    "StatePoint",
    "SystemModel",
    "builtin_system",
    "emit_system",
    "load_system",
    "parse_system",
]

"""Exact nilpotent approximation of bracket-generating polynomial frames.

The package computes, from polynomial vector fields ``X_1..X_r``, an adapted
bracket frame, exponential coordinates, the homogeneous principal parts and
the resulting nilpotent approximation, lifts it to a free Carnot group, and
studies blow-ups of horizontal curves numerically.
"""

from .ccfields import (
    AdaptedFrame,
    BracketWord,
    CCStructure,
    PolyVectorField,
    anorm,
    dilate_point,
    evaluate_word,
    lie_bracket,
    pushforward_dilation,
    select_adapted_frame,
)
from .curves import (
    Control,
    FieldSystem,
    HorizontalCurve,
    blowup,
    blowup_family,
    control_blowup_limit,
    detect_halfline,
    integrate,
    is_horizontal_line,
    lift_curve,
)
from .errors import (
    CarnotError,
    ConsistencyError,
    DecompositionError,
    HormanderError,
    JetDegreeError,
    JetDomainError,
    JetOrderError,
    RankError,
    UnsupportedError,
    WindowError,
)
from .fixtures import load_structure
from .freecarnot import (
    FreeLieElement,
    HallBasis,
    LiftedStructure,
    bch,
    build_hall_basis,
    free_bracket,
    generation_word,
    group_action,
    group_dilate,
    group_inverse,
    lift_structure,
    project_pi,
    witt_dimension,
)
from .jets import Jet, JetMap, apply_operator_power, jet_compose, jet_invert, operator_exponential
from .nilpotent import (
    Approximation,
    ExponentialChart,
    NilpotentStructure,
    approximate,
    build_exponential_chart,
    decompose_principal_parts,
    nilpotent_approximation,
    to_exponential_coordinates,
)
from .verify import VerificationReport, run_verification

__version__ = "0.1.0"

__all__ = [
    "AdaptedFrame",
    "Approximation",
    "BracketWord",
    "CCStructure",
    "CarnotError",
    "ConsistencyError",
    "Control",
    "DecompositionError",
    "ExponentialChart",
    "FieldSystem",
    "FreeLieElement",
    "HallBasis",
    "HorizontalCurve",
    "HormanderError",
    "Jet",
    "JetDegreeError",
    "JetDomainError",
    "JetMap",
    "JetOrderError",
    "LiftedStructure",
    "NilpotentStructure",
    "PolyVectorField",
    "RankError",
    "UnsupportedError",
    "VerificationReport",
    "WindowError",
    "anorm",
    "apply_operator_power",
    "approximate",
    "bch",
    "blowup",
    "blowup_family",
    "build_exponential_chart",
    "build_hall_basis",
    "control_blowup_limit",
    "decompose_principal_parts",
    "detect_halfline",
    "dilate_point",
    "evaluate_word",
    "free_bracket",
    "generation_word",
    "group_action",
    "group_dilate",
    "group_inverse",
    "integrate",
    "is_horizontal_line",
    "jet_compose",
    "jet_invert",
    "lie_bracket",
    "lift_curve",
    "lift_structure",
    "load_structure",
    "nilpotent_approximation",
    "operator_exponential",
    "project_pi",
    "pushforward_dilation",
    "run_verification",
    "select_adapted_frame",
    "to_exponential_coordinates",
    "witt_dimension",
]

"""WKB pseudomodes for two-dimensional magnetic Laplacians with complex fields."""

from .cseries import (
    BiSeries,
    UniSeries,
    complexify_real_taylor,
    compose_w,
    exact_divide_by_curve,
    implicit_w,
)
from .fieldmodel import (
    FieldSpec,
    GammaReport,
    compute_Q,
    gamma_scan,
    make_field,
    weyl_bracket,
    wirtinger_at,
)
from .pseudomode import (
    Pseudomode,
    ResidualReport,
    assemble,
    fit_decay,
    make_pseudomode,
    norm_L2,
    residual_finite_difference,
    residual_series_exact,
)
from .wkb import BoundFit, WKBSolution, fit_growth, solve_wkb

__version__ = "0.1.0"

__all__ = [
    "BiSeries",
    "UniSeries",
    "complexify_real_taylor",
    "compose_w",
    "exact_divide_by_curve",
    "implicit_w",
    "FieldSpec",
    "GammaReport",
    "compute_Q",
    "gamma_scan",
    "make_field",
    "weyl_bracket",
    "wirtinger_at",
    "WKBSolution",
    "BoundFit",
    "solve_wkb",
    "fit_growth",
    "Pseudomode",
    "ResidualReport",
    "make_pseudomode",
    "assemble",
    "norm_L2",
    "residual_series_exact",
    "residual_finite_difference",
    "fit_decay",
    "__version__",
]

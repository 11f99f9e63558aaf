"""ellest: first-order design of linear and polyhedral estimates for
linear inverse problems over ellitope signal sets."""

from .ellitope import (Ellitope, LqBall, UnitBox, make_block_weighted,
                       make_euclidean_ball, make_lp_ball)
from .design import (DesignSpec, DualPoint, SvdDesignSpec, chi_factor,
                     extract_contrast, frak_t, l2_lift, poly_to_linear,
                     quantile_bounds, recover_theta, reduced_l2_objective,
                     scale_for_eps_risk, singular_objective, upsilon)
from .ctl import CtlParams, CtlResult, run_ctl
from .estimators import MinimaxLinearEstimator, PolyhedralEstimator

__version__ = "0.1.0"

__all__ = [
    "Ellitope", "LqBall", "UnitBox", "make_block_weighted",
    "make_euclidean_ball", "make_lp_ball",
    "DesignSpec", "DualPoint", "SvdDesignSpec", "chi_factor",
    "extract_contrast", "frak_t", "l2_lift", "poly_to_linear",
    "quantile_bounds", "recover_theta", "reduced_l2_objective",
    "scale_for_eps_risk", "singular_objective", "upsilon",
    "CtlParams", "CtlResult", "run_ctl",
    "MinimaxLinearEstimator", "PolyhedralEstimator",
    "__version__",
]

"""Multiple generalized additive models with automatic smoothing.

Every parameter of the response distribution may depend on covariates
through penalized splines; all smoothing parameters are chosen by an
approximate EM maximization of the Laplace marginal likelihood.
"""

from .basis import BasisSpec, SmoothTermDesign, absorb_constraint, build_term, place_knots
from .design import ModelDesign, ModelSpec, ParameterSpec, accumulate, assemble
from .em import EmSettings, FitResult, compute_c, em_fit, oakes_gradient, update_lambda
from .estimator import MultiGAM
from .exceptions import (
    BasisSizeError,
    ConstantPredictorError,
    EmGamError,
    IdentifiabilityError,
    InvalidCurvatureError,
    NonConvergenceError,
    StalledError,
    SupportError,
)
from .families import get_family, gev_cdf, gev_mean, gev_quantile, loglik_derivs
from .inference import predict_parameters, quantile_intervals, simulate_from_fit
from .solver import NewtonSettings, detect_identifiability, maximize_penalized, stabilize

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "SmoothTermDesign",
    "absorb_constraint",
    "build_term",
    "place_knots",
    "ModelDesign",
    "ModelSpec",
    "ParameterSpec",
    "accumulate",
    "assemble",
    "EmSettings",
    "FitResult",
    "compute_c",
    "em_fit",
    "oakes_gradient",
    "update_lambda",
    "MultiGAM",
    "BasisSizeError",
    "ConstantPredictorError",
    "EmGamError",
    "IdentifiabilityError",
    "InvalidCurvatureError",
    "NonConvergenceError",
    "StalledError",
    "SupportError",
    "get_family",
    "gev_cdf",
    "gev_mean",
    "gev_quantile",
    "loglik_derivs",
    "predict_parameters",
    "quantile_intervals",
    "simulate_from_fit",
    "NewtonSettings",
    "detect_identifiability",
    "maximize_penalized",
    "stabilize",
]

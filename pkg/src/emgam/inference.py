"""Predictions, pointwise confidence bands and simulation from a fit."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .families import GUMBEL_THRESHOLD, gev_quantile

__all__ = [
    "ParameterPrediction",
    "predict_parameters",
    "gev_quantile",
    "quantile_intervals",
    "simulate_from_fit",
    "z_value",
]


def z_value(level):
    if not 0 < level < 1:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    return float(stats.norm.ppf(0.5 + level / 2.0))


@dataclass
class ParameterPrediction:
    """Per-row predictions for every distribution parameter.

    Arrays are ``(n, D)``.  ``theta``, ``se``, ``lower`` and ``upper`` are on
    the linear-predictor scale; the ``response*`` arrays map the same band
    through the family's parameter transform.  ``outside`` flags rows where
    some smooth is evaluated beyond its knot range.
    """

    names: tuple
    response_names: tuple
    theta: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    response: np.ndarray
    response_lower: np.ndarray
    response_upper: np.ndarray
    outside: np.ndarray
    level: float

    def columns(self):
        """Ordered mapping of output column name to values."""
        out = {}
        for d, name in enumerate(self.names):
            out[name] = self.theta[:, d]
            out[f"{name}_se"] = self.se[:, d]
            out[f"{name}_lower"] = self.lower[:, d]
            out[f"{name}_upper"] = self.upper[:, d]
        for d, name in enumerate(self.response_names):
            out[name] = self.response[:, d]
            out[f"{name}_lower"] = self.response_lower[:, d]
            out[f"{name}_upper"] = self.response_upper[:, d]
        out["extrapolated"] = self.outside.astype(int)
        return out


def _design_rows(result, newdata):
    design = result.design
    if newdata is None:
        X_blocks = [b.X for b in design.blocks]
        offsets = [b.offset for b in design.blocks]
        outside = np.zeros(design.n, dtype=bool)
    else:
        X_blocks, offsets, outside = design.feature_blocks(newdata)
    return X_blocks, offsets, outside


def predict_parameters(result, newdata=None, level=0.95):
    """Fitted linear predictors with delta-method pointwise bands.

    With ``newdata=None`` the training rows are used.
    """
    z = z_value(level)
    design = result.design
    family = result.family
    X_blocks, offsets, outside = _design_rows(result, newdata)
    theta = design.linear_predictors(result.beta, X_blocks, offsets)
    cov = result.posterior_cov
    se = np.empty_like(theta)
    for d, (blk, X) in enumerate(zip(design.blocks, X_blocks)):
        V = cov[blk.slice, blk.slice]
        se[:, d] = np.sqrt(np.maximum(np.einsum("ij,ij->i", X @ V, X), 0.0))
    lower, upper = theta - z * se, theta + z * se
    resp = family.response_params(theta)
    a = family.response_params(lower)
    b = family.response_params(upper)
    return ParameterPrediction(
        names=tuple(family.param_names),
        response_names=tuple(family.response_names()),
        theta=theta,
        se=se,
        lower=lower,
        upper=upper,
        response=resp,
        response_lower=np.minimum(a, b),
        response_upper=np.maximum(a, b),
        outside=outside,
        level=level,
    )


def posterior_draws(result, n_draws, rng):
    """Coefficient vectors drawn from N(beta_hat, H_P^{-1})."""
    kept = result.fit.kept
    cov = result.posterior_cov[np.ix_(kept, kept)]
    L = linalg.cholesky(cov, lower=True)
    draws = np.tile(result.beta, (n_draws, 1))
    draws[:, kept] += rng.standard_normal((n_draws, kept.size)) @ L.T
    return draws


def quantile_intervals(result, probs, newdata=None, level=0.95, n_draws=1000, rng=None):
    """GEV quantile curves with simulation-based pointwise intervals.

    Returns ``(estimate, lower, upper)``, each ``(n, len(probs))``.  The
    estimate uses the fitted coefficients; the interval is the central
    ``level`` range of quantiles computed under posterior coefficient draws.
    """
    if result.family.name != "gev":
        raise ValueError("quantile curves are only defined for the gev family")
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    if np.any((probs <= 0) | (probs >= 1)):
        raise ValueError("quantile probabilities must lie in (0, 1)")
    z_value(level)
    rng = np.random.default_rng() if rng is None else rng
    design = result.design
    threshold = getattr(result.family, "threshold", GUMBEL_THRESHOLD)
    X_blocks, offsets, _ = _design_rows(result, newdata)
    theta = design.linear_predictors(result.beta, X_blocks, offsets)
    n = theta.shape[0]
    est = np.column_stack([np.atleast_1d(gev_quantile(theta, p, threshold)) for p in probs])
    draws = posterior_draws(result, n_draws, rng)
    sims = np.empty((n_draws, n, probs.size))
    for s, beta in enumerate(draws):
        th = design.linear_predictors(beta, X_blocks, offsets)
        for k, p in enumerate(probs):
            sims[s, :, k] = gev_quantile(th, p, threshold)
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(sims, [alpha, 1.0 - alpha], axis=0)
    return est, lower, upper


def simulate_from_fit(result, rng, replicates=1, newdata=None):
    """Draw responses at the fitted parameters, independently per row.

    Returns an array of shape ``(replicates, n)``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    X_blocks, offsets, _ = _design_rows(result, newdata)
    theta = result.design.linear_predictors(result.beta, X_blocks, offsets)
    return np.stack([result.family.sample(theta, rng) for _ in range(replicates)])

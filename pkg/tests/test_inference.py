import mpmath as mp
import numpy as np
import pytest

from emgam.basis import BasisSpec
from emgam.design import ModelSpec, ParameterSpec, assemble
from emgam.em import em_fit
from emgam.families import gev_cdf, gev_quantile
from emgam.inference import (
    predict_parameters,
    quantile_intervals,
    simulate_from_fit,
    z_value,
)


def test_z_value_high_precision():
    ref = float(mp.sqrt(2) * mp.erfinv(mp.mpf("0.95")))
    assert z_value(0.95) == pytest.approx(ref, abs=1e-12)
    assert z_value(0.95) == pytest.approx(1.9599640, abs=5e-8)
    with pytest.raises(ValueError):
        z_value(1.0)


def test_intercept_only_band():
    y = np.random.default_rng(0).poisson(3.0, size=200).astype(float)
    design = assemble(ModelSpec("poisson", [ParameterSpec()]), {"y": y})
    result = em_fit(design)
    pred = predict_parameters(result)
    assert np.all(pred.theta == pred.theta[0])
    np.testing.assert_allclose(pred.se[:, 0], np.sqrt(result.posterior_cov[0, 0]))
    assert pred.theta[0, 0] == pytest.approx(np.log(y.mean()), abs=1e-6)


def _gauss_fit(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    y = np.sin(2 * np.pi * x) + rng.normal(0, 0.5, n)
    spec = ModelSpec(
        "gaussian", [ParameterSpec(smooths=[BasisSpec("cr", 8, "x")]), ParameterSpec()]
    )
    return em_fit(assemble(spec, {"x": x, "y": y}))


def test_band_shrinks_with_more_data():
    grid = {"x": np.linspace(0.05, 0.95, 20)}
    small = predict_parameters(_gauss_fit(400, 1), grid)
    large = predict_parameters(_gauss_fit(4000, 2), grid)
    ratio = (large.upper - large.lower)[:, 0] / (small.upper - small.lower)[:, 0]
    assert np.median(ratio) < 1


def test_bands_symmetric_and_positive():
    pred = predict_parameters(_gauss_fit(400, 1), level=0.9)
    np.testing.assert_allclose(pred.theta - pred.lower, pred.upper - pred.theta, rtol=1e-12)
    assert np.all(pred.upper > pred.lower)
    np.testing.assert_allclose(pred.upper - pred.theta, z_value(0.9) * pred.se, rtol=1e-12)
    # response bands are the transformed linear-predictor bands
    np.testing.assert_allclose(pred.response_upper[:, 1], np.exp(pred.upper[:, 1] / 2))


def test_prediction_columns_and_extrapolation_flag():
    result = _gauss_fit(400, 1)
    pred = predict_parameters(result, {"x": np.array([0.5, 1.5])})
    cols = list(pred.columns())
    assert cols[:4] == ["mu", "mu_se", "mu_lower", "mu_upper"]
    assert cols[-1] == "extrapolated"
    assert list(pred.columns()["extrapolated"]) == [0, 1]


@pytest.fixture(scope="module")
def gev_result():
    rng = np.random.default_rng(11)
    n = 1500
    x = rng.uniform(size=n)
    theta = np.column_stack([2 + np.sin(2 * np.pi * x), np.full(n, -0.3), np.full(n, 0.1)])
    u = rng.uniform(size=n)
    y = gev_quantile(theta, u)
    spec = ModelSpec(
        "gev", [ParameterSpec(smooths=[BasisSpec("cr", 8, "x")]), ParameterSpec(), ParameterSpec()]
    )
    return em_fit(assemble(spec, {"x": x, "y": y})), x


def test_simulated_quantile_matches_formula(gev_result):
    result, _ = gev_result
    row = {"x": np.array([0.3])}
    draws = simulate_from_fit(result, np.random.default_rng(0), 10_000, row)[:, 0]
    theta = predict_parameters(result, row).theta[0]
    for p in (0.1, 0.5, 0.9):
        q = gev_quantile(theta, p)
        assert abs(np.mean(draws <= q) - p) < 3 * np.sqrt(p * (1 - p) / draws.size)
        assert gev_cdf(q, theta) == pytest.approx(p, abs=1e-12)


def test_simulation_is_seeded(gev_result):
    result, _ = gev_result
    a = simulate_from_fit(result, np.random.default_rng(5), 3)
    b = simulate_from_fit(result, np.random.default_rng(5), 3)
    assert a.shape == (3, result.design.n)
    assert np.array_equal(a, b)


def test_observations_inside_simulation_envelope(gev_result):
    result, _ = gev_result
    sims = simulate_from_fit(result, np.random.default_rng(6), 100)
    y = result.design.y
    inside = (y >= sims.min(axis=0)) & (y <= sims.max(axis=0))
    assert inside.mean() >= 0.95


def test_quantile_intervals(gev_result):
    result, _ = gev_result
    grid = {"x": np.linspace(0.1, 0.9, 9)}
    est, lo, hi = quantile_intervals(result, [0.5, 0.99], grid, rng=np.random.default_rng(1), n_draws=400)
    assert est.shape == lo.shape == hi.shape == (9, 2)
    assert np.all(lo < hi)
    assert np.mean((lo <= est) & (est <= hi)) == 1.0
    assert np.all(est[:, 1] > est[:, 0])


def test_quantile_intervals_need_gev():
    with pytest.raises(ValueError, match="gev"):
        quantile_intervals(_gauss_fit(200, 3), [0.5])

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from emgam import BasisSpec, MultiGAM


@pytest.fixture(scope="module")
def poisson_data():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(600, 2))
    y = rng.poisson(np.exp(1 + np.sin(2 * np.pi * X[:, 0]) + 0.5 * X[:, 1])).astype(float)
    return X, y


def test_params_round_trip():
    est = MultiGAM(family="poisson", k=7, tol=1e-3)
    params = est.get_params()
    assert params["family"] == "poisson" and params["k"] == 7 and params["tol"] == 1e-3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(k=9)
    assert est.k == 9


def test_fit_predict(poisson_data):
    X, y = poisson_data
    est = MultiGAM(family="poisson", k=8).fit(X, y)
    assert est.n_features_in_ == 2
    assert est.lam_.shape == (2,)
    rate = est.predict(X)
    assert rate.shape == (600,) and np.all(rate > 0)
    truth = np.exp(1 + np.sin(2 * np.pi * X[:, 0]) + 0.5 * X[:, 1])
    assert np.mean((np.log(rate) - np.log(truth)) ** 2) < 0.02


def test_unfitted_estimator_raises(poisson_data):
    with pytest.raises(NotFittedError):
        MultiGAM().predict(poisson_data[0])


def test_feature_count_checked(poisson_data):
    X, y = poisson_data
    est = MultiGAM(family="poisson", k=6).fit(X, y)
    with pytest.raises(ValueError, match="features"):
        est.predict(X[:, :1])


def test_input_validation():
    with pytest.raises(ValueError):
        MultiGAM().fit(np.array([[0.1, np.nan]] * 50), np.zeros(50))
    with pytest.raises(ValueError, match="inconsistent"):
        MultiGAM().fit(np.random.default_rng(0).uniform(size=(50, 1)), np.zeros(40))


def test_terms_per_parameter():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(800, 2))
    y = np.sin(2 * np.pi * X[:, 0]) + rng.normal(0, np.exp(-1 + X[:, 1]))
    est = MultiGAM(family="gaussian", terms=[[0], [BasisSpec("cr", 6, 1)]]).fit(X, y)
    assert est.lam_.shape == (2,)
    pred = est.predict_parameters(X[:5])
    assert pred.theta.shape == (5, 2)
    with pytest.raises(ValueError, match="2 parameters"):
        MultiGAM(family="gaussian", terms=[[0]]).fit(X, y)


def test_dataframe_columns():
    pd = pytest.importorskip("pandas")
    rng = np.random.default_rng(2)
    df = pd.DataFrame({"a": rng.uniform(size=300), "b": rng.uniform(size=300)})
    y = rng.poisson(np.exp(df["a"].to_numpy())).astype(float)
    est = MultiGAM(family="poisson", terms=[["a"]], k=6).fit(df, y)
    assert list(est.feature_names_in_) == ["a", "b"]
    assert est.predict(df).shape == (300,)


def test_sample_is_reproducible(poisson_data):
    X, y = poisson_data
    est = MultiGAM(family="poisson", k=6).fit(X, y)
    a = est.sample(X[:10], n_samples=4, random_state=3)
    b = est.sample(X[:10], n_samples=4, random_state=3)
    assert a.shape == (4, 10) and np.array_equal(a, b)


def test_works_inside_model_selection(poisson_data):
    X, y = poisson_data
    scores = cross_val_score(MultiGAM(family="poisson", k=6), X, y, cv=3)
    assert scores.shape == (3,) and np.all(np.isfinite(scores))

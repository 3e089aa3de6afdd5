import json

import numpy as np
import pytest

from emgam import archive
from emgam.config import ConfigError, fingerprint, parse_config
from emgam.em import em_fit
from emgam.inference import predict_parameters
from emgam.tabular import CSVFormatError, read_csv, write_csv

from oracles import poisson_gam


def test_config_defaults_and_numbers():
    raw = {
        "family": "poisson",
        "params": {"log_rate": {"smooths": [{"predictor": "x", "k": 6}]}},
        "settings": {"tol": "1e-5", "newton": {"grad_tol": "1e-9"}},
    }
    spec, settings, seed, threads = parse_config(raw)
    assert spec.params[0].smooths[0].kind == "cubic-regression"
    assert settings.tol == 1e-5 and settings.newton.grad_tol == 1e-9
    assert seed is None and threads == 1


@pytest.mark.parametrize(
    "raw, message",
    [
        ({}, "'family' is required"),
        ({"family": "poisson", "params": {"sigma": {}}}, "unknown key"),
        ({"family": "poisson", "params": {"log_rate": {"smooths": [{"k": 5}]}}}, "'predictor'"),
        ({"family": "poisson", "settings": {"tol": -1}}, "tol"),
        ({"family": "poisson", "seed": -3}, "seed"),
        ({"family": "weibull"}, "family"),
    ],
)
def test_config_errors(raw, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(raw)


def test_fingerprint_ignores_key_order():
    a = {"family": "gev", "seed": 1}
    b = {"seed": 1, "family": "gev"}
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint({"family": "gev", "seed": 2})


def test_csv_round_trip_is_exact(tmp_path):
    values = np.random.default_rng(0).standard_normal(20) * 1e-7
    path = tmp_path / "t.csv"
    write_csv(path, {"a": values, "b": np.arange(20)})
    back = read_csv(path)
    assert np.array_equal(back["a"], values)
    assert b"\r" not in path.read_bytes()


@pytest.mark.parametrize(
    "text, message",
    [("", "empty"), ("a,a\n1,2\n", "duplicate"), ("a,b\n1,2\n3\n", "line 3"), ("a\nfoo\n", "non-numeric")],
)
def test_csv_errors(tmp_path, text, message):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(CSVFormatError, match=message):
        read_csv(path)


def test_archive_round_trip(tmp_path):
    design, fam = poisson_gam()
    result = em_fit(design, fam)
    path = tmp_path / "fit.json"
    archive.save(result, path, config={"family": "poisson"}, fingerprint="abc")
    loaded, raw = archive.load(path)
    assert raw["config_fingerprint"] == "abc"
    assert np.array_equal(loaded.beta, result.beta)
    assert np.array_equal(loaded.lam, result.lam)
    new = {"x1": np.linspace(0, 1, 7), "x2": np.linspace(1, 0, 7)}
    a = predict_parameters(result, new)
    b = predict_parameters(loaded, new)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.se, b.se)


def test_archive_rejects_foreign_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(archive.ArchiveError):
        archive.load(path)

import itertools

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emgam.exceptions import SupportError
from emgam.families import (
    GEV,
    GUMBEL_THRESHOLD,
    get_family,
    gev_cdf,
    gev_mean,
    gev_quantile,
    loglik_derivs,
    sample,
)

from oracles import fd_errors

mp.mp.dps = 40


def gev_loglik_mp(y, mu, tau, xi):
    y, mu, tau, xi = (mp.mpf(v) for v in (y, mu, tau, xi))
    z = (y - mu) / mp.e**tau
    if xi == 0:
        return -tau - z - mp.e ** (-z)
    return -tau - (1 + 1 / xi) * mp.log(1 + xi * z) - (1 + xi * z) ** (-1 / xi)


@pytest.mark.parametrize(
    "y, theta",
    [(0.0, (0, 0, 0)), (1.0, (0, 0, 0.5)), (2.0, (0, 0, -0.2)), (3.7, (1.2, 0.4, 0.15))],
)
def test_gev_loglik_high_precision(y, theta):
    got = loglik_derivs("gev", y, theta).loglik
    assert got == pytest.approx(float(gev_loglik_mp(y, *theta)), rel=1e-12)


def test_gev_reference_values():
    assert loglik_derivs("gev", 0.0, (0, 0, 0)).loglik == pytest.approx(-1.0, abs=1e-14)
    assert loglik_derivs("gev", 1.0, (0, 0, 0.5)).loglik == pytest.approx(-1.6608398, abs=5e-8)
    assert loglik_derivs("gev", 2.0, (0, 0, -0.2)).loglik == pytest.approx(-2.1210625, abs=5e-8)


def test_poisson_bundle():
    b = loglik_derivs("poisson", 2.0, (0.0,))
    assert b.loglik == pytest.approx(-1 - np.log(2), abs=1e-12)
    assert b.grad[0] == pytest.approx(1.0)
    assert b.neg_hess[0, 0] == pytest.approx(1.0)
    assert b.third[0, 0, 0] == pytest.approx(-1.0)


def _domain_point(name, rng):
    if name == "gaussian":
        return rng.normal(0, 2), np.array([rng.normal(), rng.normal(0, 0.5)])
    if name == "poisson":
        return float(rng.poisson(3)), np.array([rng.normal(1, 0.5)])
    if name == "exponential":
        return rng.exponential(2), np.array([rng.normal(0, 0.5)])
    if name == "gamma":
        return rng.gamma(2, 1.5), np.array([rng.normal(0.5, 0.4), rng.normal(0, 0.4)])
    if name == "binomial":
        return float(rng.integers(0, 2)), np.array([rng.normal(0, 1.5)])
    # gev: stay inside the support with (1 + xi z)^(-1/xi) of moderate size;
    # near xi = 0 with large |z| the tail term explodes and finite
    # differences lose all accuracy
    while True:
        theta = np.array([rng.normal(), rng.normal(0, 0.3), rng.uniform(-0.4, 0.5)])
        if abs(theta[2]) < 0.05:
            continue
        a = rng.uniform(0.3, 3.0)
        y = theta[0] + np.exp(theta[1]) * (a - 1) / theta[2]
        if abs(np.log(a) / theta[2]) < 10:
            return y, theta


FAMILY_NAMES = ["gaussian", "poisson", "exponential", "gamma", "binomial", "gev"]


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_finite_differences(name):
    fam = get_family(name)
    rng = np.random.default_rng(FAMILY_NAMES.index(name))
    for _ in range(30):
        y, theta = _domain_point(name, rng)
        eg, eh, et = fd_errors(fam, y, theta)
        assert eg < 1e-6 and eh < 1e-5 and et < 1e-4, (name, y, theta, eg, eh, et)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_tensor_symmetry_exact(name):
    fam = get_family(name)
    rng = np.random.default_rng(1)
    pts = [_domain_point(name, rng) for _ in range(20)]
    y = np.array([p[0] for p in pts])
    theta = np.array([p[1] for p in pts])
    _, _, nh, t3 = fam.derivatives(y, theta)
    assert np.array_equal(nh, np.swapaxes(nh, 1, 2))
    for perm in itertools.permutations((1, 2, 3)):
        assert np.array_equal(t3, np.transpose(t3, (0,) + perm))


def test_gev_support_error_carries_index():
    fam = GEV()
    y = np.array([0.0, 0.0, -10.0, 0.0])
    theta = np.tile([0.0, 0.0, 0.5], (4, 1))
    with pytest.raises(SupportError, match="observation outside support") as info:
        fam.derivatives(y, theta)
    assert info.value.index == 2


@settings(max_examples=200, deadline=None)
@given(
    z=st.floats(-5, 5),
    xi=st.floats(-0.9, 0.9).filter(lambda v: abs(v) > 2 * GUMBEL_THRESHOLD),
)
def test_gev_support_partition(z, xi):
    fam = GEV()
    inside = 1 + xi * z > 0
    try:
        ll = fam.loglik(np.array([z]), np.array([[0.0, 0.0, xi]]))
        assert inside and np.isfinite(ll[0])
    except SupportError:
        assert not inside


def test_gumbel_branch_is_used_below_threshold():
    fam = GEV()
    t = 0.5 * GUMBEL_THRESHOLD
    a = fam.derivatives(np.array([1.3]), np.array([[0.2, 0.1, t]]))
    b = fam.derivatives(np.array([1.3]), np.array([[0.2, 0.1, 0.0]]))
    for u, v in zip(a, b):
        assert np.array_equal(u, v)


def test_gumbel_branch_continuity():
    fam = GEV()
    t = GUMBEL_THRESHOLD
    for y in (-1.0, 0.3, 2.5):
        theta0 = np.array([[0.1, -0.2, 0.0]])
        theta1 = np.array([[0.1, -0.2, t]])
        l0, g0, h0, _ = fam.derivatives(np.array([y]), theta0)
        l1, g1, h1, _ = fam.derivatives(np.array([y]), theta1)
        # the analytic shape derivative bounds the jump to first order
        C = abs(g0[0, 2]) + 1.0
        assert abs(l1[0] - l0[0]) <= C * t
        assert np.max(np.abs(g1 - g0)) <= 1e-3 * max(1.0, np.max(np.abs(g0)))
        assert np.max(np.abs(h1 - h0)) <= 1e-3 * max(1.0, np.max(np.abs(h0)))


def test_gev_mean_values():
    assert gev_mean((0, 0, 0)) == pytest.approx(float(mp.euler), abs=1e-12)
    assert gev_mean((0, 0, 1.2)) == np.inf
    assert gev_mean((5, 0, 0.5)) == pytest.approx(5 + 2 * (float(mp.sqrt(mp.pi)) - 1), abs=1e-12)


def test_gev_quantile_values():
    assert gev_quantile((1.5, 0.3, 0.0), np.exp(-1)) == pytest.approx(1.5, abs=1e-14)
    ref = float(((-mp.log(mp.mpf("0.99"))) ** mp.mpf(-0.5) - 1) / mp.mpf(0.5))
    assert gev_quantile((0, 0, 0.5), 0.99) == pytest.approx(ref, rel=1e-12)
    assert gev_quantile((0, 0, 0.5), 0.99) == pytest.approx(17.9499, abs=5e-5)


@settings(max_examples=200, deadline=None)
@given(
    mu=st.floats(-5, 5),
    tau=st.floats(-2, 2),
    xi=st.one_of(st.floats(-0.8, 0.8), st.floats(-1e-5, 1e-5)),
    p=st.floats(1e-6, 1 - 1e-6),
)
def test_quantile_cdf_round_trip(mu, tau, xi, p):
    q = gev_quantile((mu, tau, xi), p)
    assert gev_cdf(q, (mu, tau, xi)) == pytest.approx(p, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(xi=st.floats(-0.8, 0.8), p1=st.floats(0.01, 0.98))
def test_quantile_increasing(xi, p1):
    assert gev_quantile((0, 0, xi), p1 + 0.01) > gev_quantile((0, 0, xi), p1)


def test_sample_gumbel_inverse():
    class FixedU:
        def uniform(self, size):
            return np.full(size, np.exp(-1.0))

    assert sample("gev", (2.0, 0.5, 0.0), FixedU())[0] == pytest.approx(2.0)


@pytest.mark.parametrize("name, theta, mean", [("gaussian", (3.0, 0.0), 3.0), ("poisson", (0.0,), 1.0)])
def test_sampling_law_of_large_numbers(name, theta, mean):
    n = 100_000
    draws = get_family(name).sample(np.tile(theta, (n, 1)), np.random.default_rng(2))
    # both distributions have unit variance here
    assert abs(draws.mean() - mean) < 5 / np.sqrt(n)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown family"):
        get_family("weibull")


def test_family_parameter_counts():
    assert {n: get_family(n).D for n in FAMILY_NAMES} == {
        "gaussian": 2, "poisson": 1, "exponential": 1, "gamma": 2, "binomial": 1, "gev": 3,
    }

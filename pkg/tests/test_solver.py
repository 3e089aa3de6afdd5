import numpy as np
import pytest

from emgam.basis import BasisSpec
from emgam.design import ModelSpec, ParameterSpec, accumulate, assemble
from emgam.exceptions import NonConvergenceError
from emgam.families import FixedScaleGaussian, Gamma
from emgam.solver import (
    NewtonSettings,
    detect_identifiability,
    maximize_penalized,
    stabilize,
)

from oracles import poisson_gam

TIGHT = NewtonSettings(grad_tol=1e-12)


def test_stabilize_clamps_small_eigenvalue():
    np.testing.assert_allclose(stabilize(np.diag([1e-12, 5.0]), 1e-8), np.diag([1e-8, 5.0]), atol=1e-15)


def test_stabilize_clamps_negative_eigenvalue():
    np.testing.assert_allclose(stabilize(np.diag([-1.0, 2.0]), 1e-8), np.diag([1e-8, 2.0]), atol=1e-15)


def test_stabilize_leaves_positive_definite_alone():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    out = stabilize(A, 1e-8)
    np.testing.assert_allclose(out, A, atol=1e-12)
    assert np.array_equal(stabilize(out, 1e-8), out)


def _tiny_linear(intercept=False):
    data = {"c0": np.ones(3), "c1": np.array([0.0, 1.0, 2.0]), "y": np.array([1.0, 2.0, 3.0])}
    fam = FixedScaleGaussian(1.0)
    spec = ModelSpec(fam, [ParameterSpec(ridge=["c0", "c1"], intercept=intercept)])
    return assemble(spec, data), fam


def test_unpenalized_fit_interpolates_line():
    design, fam = _tiny_linear()
    fit = maximize_penalized(design, fam, [0.0], settings=TIGHT)
    np.testing.assert_allclose(fit.beta, [1.0, 1.0], atol=1e-10)
    resid = design.y - design.linear_predictors(fit.beta)[:, 0]
    assert np.max(np.abs(resid)) < 1e-10


def test_ridge_matches_closed_form():
    design, fam = _tiny_linear()
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    expected = np.linalg.solve(X.T @ X + np.eye(2), X.T @ design.y)
    fit = maximize_penalized(design, fam, [1.0], settings=TIGHT)
    np.testing.assert_allclose(fit.beta, expected, rtol=1e-10)


def test_huge_penalty_shrinks_block_to_zero():
    rng = np.random.default_rng(0)
    data = {f"r{i}": rng.standard_normal(50) for i in range(3)}
    data["y"] = data["r0"] + 2.0 + rng.standard_normal(50)
    fam = FixedScaleGaussian(1.0)
    design = assemble(ModelSpec(fam, [ParameterSpec(ridge=["r0", "r1", "r2"])]), data)
    fit = maximize_penalized(design, fam, [1e12], settings=TIGHT)
    block = design.penalties[0].slice
    assert np.linalg.norm(fit.beta[block]) < 1e-5
    assert fit.beta[0] == pytest.approx(np.mean(data["y"]), abs=1e-6)


def test_full_rank_matrix_keeps_everything():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((6, 6))
    r, perm, kept, dropped = detect_identifiability(A @ A.T + np.eye(6))
    assert r == 6 and dropped.size == 0
    assert sorted(perm) == list(range(6))


def _duplicate_design(duplicate):
    rng = np.random.default_rng(2)
    n = 100
    data = {"a": rng.uniform(size=n), "b": rng.standard_normal(n)}
    data["b2"] = data["b"].copy()
    data["y"] = np.sin(3 * data["a"]) + 0.5 * data["b"] + 0.1 * rng.standard_normal(n)
    linear = ["b", "b2"] if duplicate else ["b"]
    fam = FixedScaleGaussian(0.1)
    spec = ModelSpec(fam, [ParameterSpec(smooths=[BasisSpec("cr", 6, "a")], linear=linear)])
    return assemble(spec, data), fam


def test_duplicate_column_is_dropped():
    dup, fam = _duplicate_design(True)
    ref, _ = _duplicate_design(False)
    fit = maximize_penalized(dup, fam, [1.0], settings=TIGHT)
    fit_ref = maximize_penalized(ref, fam, [1.0], settings=TIGHT)
    assert fit.dropped.size == 1
    assert fit.rank == dup.p - 1
    names = [dup.coef_names[i] for i in fit.dropped]
    assert names[0].endswith(("b", "b2"))
    diff = dup.linear_predictors(fit.beta) - ref.linear_predictors(fit_ref.beta)
    assert np.max(np.abs(diff)) < 1e-8


def test_monotone_ascent_and_convergence():
    design, fam = poisson_gam(seed=3)
    fit = maximize_penalized(design, fam, [0.01, 0.01], settings=TIGHT)
    assert np.all(np.diff(fit.history) > 0)
    assert fit.converged and fit.iterations > 1
    assert np.max(np.abs(fit.U_P[fit.kept])) < 1e-8 * (1 + abs(fit.loglik_pen))


def test_penalized_hessian_is_consistent():
    design, fam = poisson_gam(seed=4)
    lam = np.array([1.0, 3.0])
    fit = maximize_penalized(design, fam, lam, settings=TIGHT)
    _, _, H = accumulate(design, fam, fit.beta)
    np.testing.assert_allclose(fit.H_P, H + design.penalty_matrix(lam), rtol=1e-12)


def test_implicit_derivative_gamma():
    rng = np.random.default_rng(5)
    n = 400
    x1, x2 = rng.uniform(size=n), rng.uniform(size=n)
    shape = 3.0
    mean = np.exp(0.5 + np.sin(2 * np.pi * x1) + x2**2)
    y = rng.gamma(shape, mean / shape)
    fam = Gamma()
    spec = ModelSpec(
        fam,
        [
            ParameterSpec(smooths=[BasisSpec("cr", 6, "x1")]),
            ParameterSpec(smooths=[BasisSpec("cr", 6, "x2")]),
        ],
    )
    design = assemble(spec, {"x1": x1, "x2": x2, "y": y})
    lam = np.array([0.5, 2.0])
    fit = maximize_penalized(design, fam, lam, settings=TIGHT)
    for j, pen in enumerate(design.penalties):
        S_j = np.zeros((design.p, design.p))
        S_j[pen.slice, pen.slice] = pen.S
        analytic = -np.linalg.solve(fit.H_P, S_j @ fit.beta)
        h = 1e-4 * lam[j]
        plus, minus = lam.copy(), lam.copy()
        plus[j] += h
        minus[j] -= h
        bp = maximize_penalized(design, fam, plus, fit.beta, TIGHT).beta
        bm = maximize_penalized(design, fam, minus, fit.beta, TIGHT).beta
        fd = (bp - bm) / (2 * h)
        assert np.linalg.norm(fd - analytic) / np.linalg.norm(analytic) < 1e-3


def test_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(grad_tol=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_halvings=-1)


def test_iteration_cap_reports_best():
    design, fam = poisson_gam(seed=3)
    with pytest.raises(NonConvergenceError) as info:
        maximize_penalized(design, fam, [0.01, 0.01], settings=NewtonSettings(grad_tol=1e-12, max_iter=1))
    assert info.value.best is not None
    assert np.isfinite(info.value.best.loglik_pen)

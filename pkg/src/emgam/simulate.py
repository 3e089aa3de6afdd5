"""Simulation study: synthetic distributional-regression benchmarks.

Seven covariates ``x1..x7`` are independent standard uniforms.  The
functional parameters are

    mu    = f1(x1) + f2(x2) + f3(x3)
    sigma = f4(x4) + f5(x5) + f6(x6)
    xi    = f7(x7)

and each model maps them to a response distribution.  Fitted linear
predictors are transformed back to this functional scale before the mean
squared error is computed.
"""

import csv
import io
import logging
import time
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec
from .design import ModelSpec, ParameterSpec, assemble
from .em import EmSettings, em_fit
from .exceptions import EmGamError, NonConvergenceError
from .families import GEV, Binomial, Exponential, Gamma, Gaussian, Poisson

logger = logging.getLogger(__name__)

N_COVARIATES = 7
REPORT_COLUMNS = ("model", "replicate", "parameter", "mse", "seconds", "converged")


def f1(x):
    return 1e4 * x**3 * (1 - x) ** 6 * ((1 - x) ** 4 + 20 * x**8)


def f2(x):
    return 2 * np.sin(np.pi * x)


def f3(x):
    return np.exp(2 * x)


def f4(x):
    return 0.1 * x**2


def f5(x):
    return np.sin(2 * np.pi * x) / 2


def f6(x):
    return -0.2 - x**3 / 2


def f7(x):
    return -(x**2) / 2 + np.sin(np.pi * x)


_F = (f1, f2, f3, f4, f5, f6, f7)


def eval_f(j, x):
    """Evaluate test function ``j`` (1 to 7)."""
    if not 1 <= j <= 7:
        raise ValueError(f"function index must be in 1..7, got {j}")
    return _F[j - 1](np.asarray(x, dtype=float))


@dataclass(frozen=True)
class StudyModel:
    """One generative model.

    ``uses`` lists the functional parameters that drive the response, in
    linear-predictor order.  ``to_predictor`` maps the functional values to
    the family's linear predictors and ``to_functional`` inverts it.
    """

    name: str
    family: type
    uses: tuple

    def to_predictor(self, funcs):
        out = np.column_stack([funcs[u] for u in self.uses])
        if self.name in ("poisson", "exponential", "gamma"):
            out[:, 0] = out[:, 0] / 6.0
        elif self.name == "binomial":
            out[:, 0] = (out[:, 0] - 5.0) / 6.0
        return out

    def to_functional(self, theta):
        out = np.array(theta, dtype=float, copy=True)
        if self.name in ("poisson", "exponential", "gamma"):
            out[:, 0] = 6.0 * out[:, 0]
        elif self.name == "binomial":
            out[:, 0] = 6.0 * out[:, 0] + 5.0
        return out


MODELS = {
    "gauss": StudyModel("gauss", Gaussian, ("mu", "sigma")),
    "poisson": StudyModel("poisson", Poisson, ("mu",)),
    "exponential": StudyModel("exponential", Exponential, ("mu",)),
    "gamma": StudyModel("gamma", Gamma, ("mu", "sigma")),
    "binomial": StudyModel("binomial", Binomial, ("mu",)),
    "gev": StudyModel("gev", GEV, ("mu", "sigma", "xi")),
}

_COVARIATES = {"mu": ("x1", "x2", "x3"), "sigma": ("x4", "x5", "x6"), "xi": ("x7",)}


def get_model(name):
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; expected one of {sorted(MODELS)}"
        ) from None


def functional_parameters(data):
    return {
        "mu": f1(data["x1"]) + f2(data["x2"]) + f3(data["x3"]),
        "sigma": f4(data["x4"]) + f5(data["x5"]) + f6(data["x6"]),
        "xi": f7(data["x7"]),
    }


def generate_replicate(model, n, rng):
    """Draw one training set.

    Returns ``(data, truth)``: ``data`` maps ``x1..x7`` and ``y`` to arrays,
    ``truth`` maps each functional parameter the model uses to its values.
    """
    model = get_model(model) if isinstance(model, str) else model
    X = rng.uniform(size=(n, N_COVARIATES))
    data = {f"x{j + 1}": X[:, j].copy() for j in range(N_COVARIATES)}
    funcs = functional_parameters(data)
    theta = model.to_predictor(funcs)
    data["y"] = model.family().sample(theta, rng)
    truth = {u: funcs[u] for u in model.uses}
    return data, truth


def model_spec(model, k=10):
    model = get_model(model) if isinstance(model, str) else model
    params = [
        ParameterSpec(smooths=[BasisSpec("cubic-regression", k, c) for c in _COVARIATES[u]])
        for u in model.uses
    ]
    return ModelSpec(family=model.family(), params=params)


def mse(truth, fitted):
    truth = np.asarray(truth, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if truth.shape != fitted.shape:
        raise ValueError("truth and fitted values differ in length")
    return float(np.mean((truth - fitted) ** 2))


def replicate_rng(seed, replicate):
    """Independent stream for one replicate, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, replicate]))


@dataclass
class StudyConfig:
    model: str
    n: int = 25000
    R: int = 100
    seed: int = 0
    k: int = 10
    threads: int = 1
    settings: EmSettings = None

    def __post_init__(self):
        get_model(self.model)
        if self.R < 1:
            raise ValueError("R must be >= 1")
        uses = get_model(self.model).uses
        total_basis = sum(1 + len(_COVARIATES[u]) * (self.k - 1) for u in uses)
        if self.n < 10 * total_basis:
            raise ValueError(
                f"n={self.n} is below 10 x total basis size ({total_basis})"
            )


@dataclass
class ReplicateResult:
    replicate: int
    mse: dict
    seconds: float
    converged: bool
    error: str = None


def fit_replicate(config, replicate):
    model = get_model(config.model)
    data, truth = generate_replicate(model, config.n, replicate_rng(config.seed, replicate))
    t0 = time.perf_counter()
    try:
        design = assemble(model_spec(model, config.k), data)
        result = em_fit(design, settings=config.settings)
    except (NonConvergenceError, EmGamError, np.linalg.LinAlgError) as exc:
        logger.info("replicate %d failed: %s", replicate, exc)
        return ReplicateResult(
            replicate, {u: float("nan") for u in model.uses},
            time.perf_counter() - t0, False, str(exc),
        )
    seconds = time.perf_counter() - t0
    fitted = model.to_functional(design.linear_predictors(result.beta))
    errs = {u: mse(truth[u], fitted[:, d]) for d, u in enumerate(model.uses)}
    return ReplicateResult(replicate, errs, seconds, True)


@dataclass
class StudyReport:
    config: StudyConfig
    replicates: list

    @property
    def n_failed(self):
        return sum(not r.converged for r in self.replicates)

    def summary(self):
        """Mean and variance of each parameter's MSE over converged replicates."""
        ok = [r for r in self.replicates if r.converged]
        out = {}
        for u in get_model(self.config.model).uses:
            vals = np.sort([r.mse[u] for r in ok])
            out[u] = {
                "mean": float(np.mean(vals)) if vals.size else float("nan"),
                "var": float(np.var(vals, ddof=1)) if vals.size > 1 else float("nan"),
            }
        secs = np.sort([r.seconds for r in ok])
        out["seconds"] = float(np.mean(secs)) if secs.size else float("nan")
        out["converged"] = len(ok)
        out["failed"] = self.n_failed
        return out

    def to_csv(self, timing=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in sorted(self.replicates, key=lambda r: r.replicate):
            for u in get_model(self.config.model).uses:
                w.writerow([
                    self.config.model,
                    r.replicate,
                    u,
                    repr(r.mse[u]),
                    repr(r.seconds) if timing else "",
                    str(r.converged).lower(),
                ])
        return buf.getvalue()


def run_study(config):
    """Fit every replicate; failures are recorded rather than raised."""
    idx = range(config.R)
    if config.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(lambda r: fit_replicate(config, r), idx))
    else:
        results = [fit_replicate(config, r) for r in idx]
    return StudyReport(config, results)

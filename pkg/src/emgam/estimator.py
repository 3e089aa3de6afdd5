"""scikit-learn style front end."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from .basis import BasisSpec
from .design import ModelSpec, ParameterSpec, assemble
from .em import EmSettings, em_fit
from .families import get_family
from .inference import predict_parameters, simulate_from_fit
from .solver import NewtonSettings


class MultiGAM(RegressorMixin, BaseEstimator):
    """Additive models for every parameter of a response distribution.

    Parameters
    ----------
    family : str, dict or Family
        Response distribution, e.g. ``"gaussian"``, ``"gev"`` or
        ``{"name": "gaussian_fixed", "sd": 1.0}``.
    terms : list or None
        One entry per distribution parameter.  Each entry is a list of smooth
        terms, given as a column index, a column name (DataFrame input) or a
        :class:`BasisSpec`.  ``None`` puts a smooth of every column into every
        parameter.
    k : int
        Basis dimension for terms not given as a ``BasisSpec``.
    kind : str
        Basis kind for terms not given as a ``BasisSpec``.
    tol, max_outer, lam0, pll_tol, freeze, threads
        Smoothing-parameter iteration controls; see :class:`EmSettings`.
    grad_tol : float
        Relative gradient tolerance of the inner Newton iteration.

    Attributes
    ----------
    result_ : FitResult
    coef_ : ndarray of shape (p,)
    lam_ : ndarray of shape (q,)
    n_features_in_ : int
    """

    def __init__(
        self,
        family="gaussian",
        terms=None,
        k=10,
        kind="cubic-regression",
        tol=1e-4,
        max_outer=5000,
        lam0=1.0,
        pll_tol=1e-8,
        freeze=True,
        threads=1,
        grad_tol=1e-7,
    ):
        self.family = family
        self.terms = terms
        self.k = k
        self.kind = kind
        self.tol = tol
        self.max_outer = max_outer
        self.lam0 = lam0
        self.pll_tol = pll_tol
        self.freeze = freeze
        self.threads = threads
        self.grad_tol = grad_tol

    def _column_names(self, X):
        if hasattr(X, "columns"):
            return [str(c) for c in X.columns]
        return None

    def _as_table(self, X, reset):
        names = self._column_names(X)
        arr = check_array(X, dtype=np.float64)
        if reset:
            self.n_features_in_ = arr.shape[1]
            if names is not None:
                self.feature_names_in_ = np.asarray(names, dtype=object)
            elif hasattr(self, "feature_names_in_"):
                del self.feature_names_in_
        elif arr.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {arr.shape[1]} features, but {type(self).__name__} "
                f"is expecting {self.n_features_in_} features as input"
            )
        keys = self._keys()
        return {key: arr[:, i] for i, key in enumerate(keys)}

    def _keys(self):
        if hasattr(self, "feature_names_in_"):
            return list(self.feature_names_in_)
        return [f"x{i}" for i in range(self.n_features_in_)]

    def _resolve(self, term):
        keys = self._keys()
        if isinstance(term, BasisSpec):
            pred = term.predictor
            if isinstance(pred, (int, np.integer)):
                pred = keys[pred]
            return BasisSpec(term.kind, term.k, pred, term.knot_rule, term.period)
        if isinstance(term, (int, np.integer)):
            return BasisSpec(self.kind, self.k, keys[term])
        if term not in keys:
            raise ValueError(f"unknown column {term!r} in terms")
        return BasisSpec(self.kind, self.k, term)

    def _model_spec(self, family):
        terms = self.terms
        if terms is None:
            terms = [list(range(self.n_features_in_))] * family.D
        if len(terms) != family.D:
            raise ValueError(
                f"family {family.name} has {family.D} parameters, terms has {len(terms)}"
            )
        params = [ParameterSpec(smooths=[self._resolve(t) for t in ts]) for ts in terms]
        return ModelSpec(family=family, params=params)

    def fit(self, X, y):
        """Fit coefficients and smoothing parameters."""
        data = self._as_table(X, reset=True)
        y = check_array(y, ensure_2d=False, dtype=np.float64).ravel()
        if y.shape[0] != next(iter(data.values())).shape[0]:
            raise ValueError("X and y have inconsistent numbers of samples")
        family = get_family(self.family)
        spec = self._model_spec(family)
        design = assemble(spec, data, y=y)
        settings = EmSettings(
            tol=self.tol,
            max_outer=self.max_outer,
            lam0=self.lam0,
            pll_tol=self.pll_tol,
            freeze=self.freeze,
            threads=self.threads,
            newton=NewtonSettings(grad_tol=self.grad_tol),
        )
        self.result_ = em_fit(design, family, settings)
        self.coef_ = self.result_.beta
        self.lam_ = self.result_.lam
        return self

    def predict_parameters(self, X, level=0.95):
        """Per-row linear predictors with pointwise confidence bands."""
        check_is_fitted(self, "result_")
        return predict_parameters(self.result_, self._as_table(X, reset=False), level)

    def predict(self, X):
        """First distribution parameter on its natural scale.

        This is the mean for the Gaussian, the rate for Poisson and
        exponential responses, the success probability for the binomial and
        the location for the GEV.
        """
        return self.predict_parameters(X).response[:, 0]

    def sample(self, X, n_samples=1, random_state=None):
        """Draw responses from the fitted distribution at each row of ``X``."""
        check_is_fitted(self, "result_")
        rng = check_random_state(random_state)
        gen = np.random.default_rng(rng.randint(0, 2**31 - 1))
        data = self._as_table(X, reset=False)
        return simulate_from_fit(self.result_, gen, n_samples, data)

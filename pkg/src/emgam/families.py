"""Response distributions with analytic log-likelihood derivatives.

Each family works on a vector of ``D`` linear predictors per observation and
returns the log-likelihood together with its gradient, negative Hessian and
third-derivative tensor with respect to those predictors.  The vectorised
entry point is :meth:`Family.derivatives`; :func:`loglik_derivs` wraps it for
a single observation.

Links (what each linear predictor means):

=============  =========================================================
gaussian       mean, log-variance (sd = exp(theta2 / 2))
poisson        log-rate
exponential    log-rate
gamma          log-shape, negative log-scale (scale = exp(-theta2))
binomial       logit of the success probability
gev            location, log-scale, shape
=============  =========================================================
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import SupportError

EULER_GAMMA = float(np.euler_gamma)
MACHINE_EPS = float(np.finfo(float).eps)
GUMBEL_THRESHOLD = MACHINE_EPS**0.3

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DerivBundle:
    """Log-likelihood and derivatives at one observation."""

    loglik: float
    grad: np.ndarray
    neg_hess: np.ndarray
    third: np.ndarray


def _sym3(entries, n, D):
    """Fill a fully symmetric (n, D, D, D) tensor from its unique entries."""
    T = np.empty((n, D, D, D))
    for (a, b, c), v in entries.items():
        for p in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
            T[(slice(None),) + p] = v
    return T


def _sym2(entries, n, D):
    H = np.empty((n, D, D))
    for (a, b), v in entries.items():
        H[:, a, b] = v
        H[:, b, a] = v
    return H


class Family:
    """Base class.

    Subclasses implement ``_derivs(y, theta, order)`` returning arrays of
    shape (n,), (n, D), (n, D, D), (n, D, D, D) for the log-likelihood,
    gradient, second derivative and third derivative (the later ones only
    when ``order`` asks for them).
    """

    name = None
    D = None
    param_names = ()

    def check_y(self, y):
        return np.asarray(y, dtype=float)

    def derivatives(self, y, theta, order=3):
        """Vectorised derivatives.

        Returns ``(loglik, grad, neg_hess, third)``; ``third`` is the tensor
        of third derivatives of the log-likelihood (not of its negative).
        Entries beyond ``order`` are ``None``.
        """
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float).reshape(y.size, self.D)
        ll, g, h2, h3 = self._derivs(y, theta, order)
        neg_hess = None if h2 is None else -h2
        return ll, g, neg_hess, h3

    def loglik(self, y, theta):
        return self.derivatives(y, theta, order=0)[0]

    def sample(self, theta, rng):
        raise NotImplementedError

    def response_params(self, theta):
        """Natural parameters of the distribution from linear predictors."""
        return np.asarray(theta, dtype=float)

    def response_names(self):
        return self.param_names

    def init_intercepts(self, y):
        """Method-of-moments starting values, one per linear predictor."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def to_dict(self):
        return {"name": self.name}


class Gaussian(Family):
    name = "gaussian"
    D = 2
    param_names = ("mu", "sigma")

    def _derivs(self, y, theta, order):
        mu, s = theta[:, 0], theta[:, 1]
        n = y.size
        r = y - mu
        w = np.exp(-s)
        rw = r * w
        r2w = r * rw
        ll = -0.5 * _LOG_2PI - 0.5 * s - 0.5 * r2w
        if order < 1:
            return ll, None, None, None
        g = np.column_stack([rw, -0.5 + 0.5 * r2w])
        if order < 2:
            return ll, g, None, None
        h = _sym2({(0, 0): -w, (0, 1): -rw, (1, 1): -0.5 * r2w}, n, 2)
        if order < 3:
            return ll, g, h, None
        t = _sym3(
            {
                (0, 0, 0): np.zeros(n),
                (0, 0, 1): w,
                (0, 1, 1): rw,
                (1, 1, 1): 0.5 * r2w,
            },
            n,
            2,
        )
        return ll, g, h, t

    def sample(self, theta, rng):
        theta = np.atleast_2d(theta)
        return rng.normal(theta[:, 0], np.exp(0.5 * theta[:, 1]))

    def response_params(self, theta):
        theta = np.atleast_2d(theta)
        return np.column_stack([theta[:, 0], np.exp(0.5 * theta[:, 1])])

    def response_names(self):
        return ("mean", "sd")

    def init_intercepts(self, y):
        return np.array([np.mean(y), np.log(max(np.var(y), 1e-12))])


class FixedScaleGaussian(Family):
    """Gaussian with a known standard deviation; one linear predictor."""

    name = "gaussian_fixed"
    D = 1
    param_names = ("mu",)

    def __init__(self, sd=1.0):
        if not sd > 0:
            raise ValueError("sd must be positive")
        self.sd = float(sd)

    def _derivs(self, y, theta, order):
        n = y.size
        var = self.sd**2
        r = y - theta[:, 0]
        ll = -0.5 * _LOG_2PI - np.log(self.sd) - 0.5 * r**2 / var
        g = (r / var)[:, None]
        h = np.full((n, 1, 1), -1.0 / var)
        t = np.zeros((n, 1, 1, 1))
        return ll, g, h, t

    def sample(self, theta, rng):
        return rng.normal(np.atleast_2d(theta)[:, 0], self.sd)

    def init_intercepts(self, y):
        return np.array([np.mean(y)])

    def __repr__(self):
        return f"FixedScaleGaussian(sd={self.sd})"

    def to_dict(self):
        return {"name": self.name, "sd": self.sd}


class Poisson(Family):
    name = "poisson"
    D = 1
    param_names = ("log_rate",)

    def check_y(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("poisson responses must be non-negative integers")
        return y

    def _derivs(self, y, theta, order):
        eta = theta[:, 0]
        mu = np.exp(eta)
        ll = y * eta - mu - special.gammaln(y + 1.0)
        g = (y - mu)[:, None]
        h = -mu[:, None, None]
        t = -mu[:, None, None, None]
        return ll, g, h, t

    def sample(self, theta, rng):
        return rng.poisson(np.exp(np.atleast_2d(theta)[:, 0])).astype(float)

    def response_params(self, theta):
        return np.exp(np.atleast_2d(theta))

    def response_names(self):
        return ("rate",)

    def init_intercepts(self, y):
        return np.array([np.log(max(np.mean(y), 1e-8))])


class Exponential(Family):
    name = "exponential"
    D = 1
    param_names = ("log_rate",)

    def check_y(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("exponential responses must be non-negative")
        return y

    def _derivs(self, y, theta, order):
        eta = theta[:, 0]
        yr = y * np.exp(eta)
        ll = eta - yr
        g = (1.0 - yr)[:, None]
        h = -yr[:, None, None]
        t = -yr[:, None, None, None]
        return ll, g, h, t

    def sample(self, theta, rng):
        return rng.exponential(np.exp(-np.atleast_2d(theta)[:, 0]))

    def response_params(self, theta):
        return np.exp(np.atleast_2d(theta))

    def response_names(self):
        return ("rate",)

    def init_intercepts(self, y):
        return np.array([-np.log(max(np.mean(y), 1e-12))])


class Gamma(Family):
    name = "gamma"
    D = 2
    param_names = ("log_shape", "neg_log_scale")

    def check_y(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("gamma responses must be positive")
        return y

    def _derivs(self, y, theta, order):
        a, b = theta[:, 0], theta[:, 1]
        n = y.size
        k = np.exp(a)
        ly = np.log(y)
        yeb = y * np.exp(b)
        lin = k * (b + ly)
        ll = -special.gammaln(k) + lin - ly - yeb
        psi0 = special.digamma(k)
        g = np.column_stack([-psi0 * k + lin, k - yeb])
        if order < 2:
            return ll, g, None, None
        psi1 = special.polygamma(1, k)
        haa = -psi1 * k**2 - psi0 * k + lin
        h = _sym2({(0, 0): haa, (0, 1): k, (1, 1): -yeb}, n, 2)
        if order < 3:
            return ll, g, h, None
        psi2 = special.polygamma(2, k)
        t = _sym3(
            {
                (0, 0, 0): -psi2 * k**3 - 3.0 * psi1 * k**2 - psi0 * k + lin,
                (0, 0, 1): k,
                (0, 1, 1): np.zeros(n),
                (1, 1, 1): -yeb,
            },
            n,
            2,
        )
        return ll, g, h, t

    def sample(self, theta, rng):
        theta = np.atleast_2d(theta)
        return rng.gamma(np.exp(theta[:, 0]), np.exp(-theta[:, 1]))

    def response_params(self, theta):
        theta = np.atleast_2d(theta)
        return np.column_stack([np.exp(theta[:, 0]), np.exp(-theta[:, 1])])

    def response_names(self):
        return ("shape", "scale")

    def init_intercepts(self, y):
        m, v = np.mean(y), max(np.var(y), 1e-12)
        return np.array([np.log(m * m / v), -np.log(v / m)])


class Binomial(Family):
    """Bernoulli trials (one trial per row)."""

    name = "binomial"
    D = 1
    param_names = ("logit",)

    def check_y(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("binomial responses must be 0 or 1")
        return y

    def _derivs(self, y, theta, order):
        eta = theta[:, 0]
        p = special.expit(eta)
        ll = y * eta - np.logaddexp(0.0, eta)
        v = p * (1.0 - p)
        g = (y - p)[:, None]
        h = -v[:, None, None]
        t = (-v * (1.0 - 2.0 * p))[:, None, None, None]
        return ll, g, h, t

    def sample(self, theta, rng):
        p = special.expit(np.atleast_2d(theta)[:, 0])
        return (rng.uniform(size=p.size) < p).astype(float)

    def response_params(self, theta):
        return special.expit(np.atleast_2d(theta))

    def response_names(self):
        return ("prob",)

    def init_intercepts(self, y):
        m = np.clip(np.mean(y), 1e-6, 1 - 1e-6)
        return np.array([np.log(m / (1 - m))])


# --- generalized extreme value -----------------------------------------------

# below this |shape * u| the pure shape-derivatives of log1p(shape*u)/shape
# are evaluated by their power series
_SERIES_CUTOFF = 0.1
_SERIES_TERMS = 40


def _phi_shape_derivs(u, xi):
    """phi = log1p(xi*u)/xi and its first three derivatives in xi."""
    A = 1.0 + xi * u
    L = np.log1p(xi * u)
    zu = xi * u
    small = np.abs(zu) < _SERIES_CUTOFF
    phi = np.empty_like(u)
    p1 = np.empty_like(u)
    p2 = np.empty_like(u)
    p3 = np.empty_like(u)

    big = ~small
    if big.any():
        xb, ub, Ab, Lb = xi[big], u[big], A[big], L[big]
        N = xb * ub / Ab - Lb
        N1 = -xb * ub**2 / Ab**2
        N2 = -(ub**2) / Ab**2 + 2.0 * xb * ub**3 / Ab**3
        phi[big] = Lb / xb
        p1[big] = N / xb**2
        p2[big] = N1 / xb**2 - 2.0 * N / xb**3
        p3[big] = N2 / xb**2 - 4.0 * N1 / xb**3 + 6.0 * N / xb**4

    if small.any():
        us, zs = u[small], zu[small]
        # phi = u * sum_k (-z)^k / (k+1); derivative j in xi brings u^j
        s0 = np.zeros_like(us)
        s1 = np.zeros_like(us)
        s2 = np.zeros_like(us)
        s3 = np.zeros_like(us)
        for k in range(_SERIES_TERMS - 1, -1, -1):
            s0 = s0 * (-zs) + 1.0 / (k + 1)
        for k in range(_SERIES_TERMS - 1, 0, -1):
            s1 = s1 * (-zs) + k / (k + 1.0)
        for k in range(_SERIES_TERMS - 1, 1, -1):
            s2 = s2 * (-zs) + k * (k - 1) / (k + 1.0)
        for k in range(_SERIES_TERMS - 1, 2, -1):
            s3 = s3 * (-zs) + k * (k - 1) * (k - 2) / (k + 1.0)
        phi[small] = us * s0
        p1[small] = -(us**2) * s1
        p2[small] = us**3 * s2
        p3[small] = -(us**4) * s3
    return A, L, phi, p1, p2, p3


class GEV(Family):
    """Generalized extreme value distribution.

    Linear predictors are (location, log-scale, shape).  Observations whose
    shape satisfies ``|xi| <= GUMBEL_THRESHOLD`` are evaluated on the Gumbel
    branch; the derivatives there are the xi -> 0 limits, so the shape
    direction stays informative.
    """

    name = "gev"
    D = 3
    param_names = ("mu", "tau", "xi")

    def __init__(self, threshold=GUMBEL_THRESHOLD):
        self.threshold = float(threshold)

    def _derivs(self, y, theta, order):
        mu, tau, xi = theta[:, 0], theta[:, 1], theta[:, 2].copy()
        n = y.size
        gumbel = np.abs(xi) <= self.threshold
        xi[gumbel] = 0.0
        s = np.exp(-tau)
        u = (y - mu) * s
        A = 1.0 + xi * u
        bad = (~gumbel) & ~(A > 0)
        if bad.any():
            raise SupportError(int(np.flatnonzero(bad)[0]))

        A, L, phi, p_x, p_xx, p_xxx = _phi_shape_derivs(u, xi)
        t = np.exp(-phi)
        ll = -tau - L - phi - t
        if order < 1:
            return ll, None, None, None

        # partials of L = log1p(xi*u) and phi = L/xi in (u, xi)
        iA = 1.0 / A
        iA2 = iA * iA
        iA3 = iA2 * iA
        L_u, L_uu, L_uuu = xi * iA, -(xi**2) * iA2, 2.0 * xi**3 * iA3
        L_x, L_xx, L_xxx = u * iA, -(u**2) * iA2, 2.0 * u**3 * iA3
        L_ux, L_uux, L_uxx = iA2, -2.0 * xi * iA3, -2.0 * u * iA3
        p_u, p_uu, p_uuu = iA, -xi * iA2, 2.0 * xi**2 * iA3
        p_ux, p_uux, p_uxx = -u * iA2, (xi * u - 1.0) * iA3, 2.0 * u**2 * iA3

        # partials of t = exp(-phi)
        def t1(pa):
            return -t * pa

        def t2(pa, pb, pab):
            return t * (pa * pb - pab)

        def t3(pa, pb, pc, pab, pac, pbc, pabc):
            return t * (-pa * pb * pc + pab * pc + pac * pb + pbc * pa - pabc)

        # g(u, xi) = -L - phi - t
        g_u = -L_u - p_u - t1(p_u)
        g_x = -L_x - p_x - t1(p_x)
        grad = np.column_stack([-s * g_u, -1.0 - u * g_u, g_x])
        if order < 2:
            return ll, grad, None, None

        g_uu = -L_uu - p_uu - t2(p_u, p_u, p_uu)
        g_ux = -L_ux - p_ux - t2(p_u, p_x, p_ux)
        g_xx = -L_xx - p_xx - t2(p_x, p_x, p_xx)
        hess = _sym2(
            {
                (0, 0): s * s * g_uu,
                (0, 1): s * (g_u + u * g_uu),
                (1, 1): u * g_u + u * u * g_uu,
                (0, 2): -s * g_ux,
                (1, 2): -u * g_ux,
                (2, 2): g_xx,
            },
            n,
            3,
        )
        if order < 3:
            return ll, grad, hess, None

        g_uuu = -L_uuu - p_uuu - t3(p_u, p_u, p_u, p_uu, p_uu, p_uu, p_uuu)
        g_uux = -L_uux - p_uux - t3(p_u, p_u, p_x, p_uu, p_ux, p_ux, p_uux)
        g_uxx = -L_uxx - p_uxx - t3(p_u, p_x, p_x, p_ux, p_ux, p_xx, p_uxx)
        g_xxx = -L_xxx - p_xxx - t3(p_x, p_x, p_x, p_xx, p_xx, p_xx, p_xxx)
        third = _sym3(
            {
                (0, 0, 0): -(s**3) * g_uuu,
                (0, 0, 1): -(s**2) * (2.0 * g_uu + u * g_uuu),
                (0, 1, 1): -s * (g_u + 3.0 * u * g_uu + u * u * g_uuu),
                (1, 1, 1): -u * g_u - 3.0 * u * u * g_uu - u**3 * g_uuu,
                (0, 0, 2): s * s * g_uux,
                (0, 1, 2): s * (g_ux + u * g_uux),
                (1, 1, 2): u * g_ux + u * u * g_uux,
                (0, 2, 2): -s * g_uxx,
                (1, 2, 2): -u * g_uxx,
                (2, 2, 2): g_xxx,
            },
            n,
            3,
        )
        return ll, grad, hess, third

    def sample(self, theta, rng):
        theta = np.atleast_2d(theta)
        u = rng.uniform(size=theta.shape[0])
        return np.reshape(gev_quantile(theta, u, self.threshold), theta.shape[0])

    def response_params(self, theta):
        theta = np.atleast_2d(theta)
        return np.column_stack([theta[:, 0], np.exp(theta[:, 1]), theta[:, 2]])

    def response_names(self):
        return ("location", "scale", "shape")

    def init_intercepts(self, y):
        # Gumbel quartile relations; sample moments are unreliable because
        # heavy upper tails (positive shape) inflate the variance
        q25, q50, q75 = np.quantile(y, [0.25, 0.5, 0.75])
        spread = np.log(-np.log(0.25)) - np.log(-np.log(0.75))
        sigma = max((q75 - q25) / spread, 1e-8)
        return np.array([q50 + sigma * np.log(np.log(2.0)), np.log(sigma), 0.0])

    def __repr__(self):
        return "GEV()"

    def to_dict(self):
        return {"name": self.name, "threshold": self.threshold}


def gev_mean(theta, threshold=GUMBEL_THRESHOLD):
    """Expectation of the GEV distribution; ``inf`` when shape >= 1."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    mu, sigma, xi = theta[:, 0], np.exp(theta[:, 1]), theta[:, 2]
    out = np.full(mu.shape, np.inf)
    gum = np.abs(xi) <= threshold
    gen = (~gum) & (xi < 1)
    out[gum] = mu[gum] + EULER_GAMMA * sigma[gum]
    out[gen] = mu[gen] + sigma[gen] * (special.gamma(1.0 - xi[gen]) - 1.0) / xi[gen]
    return out if out.size > 1 else float(out[0])


def gev_quantile(theta, p, threshold=GUMBEL_THRESHOLD):
    """Inverse distribution function of the GEV at probability ``p``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    p = np.asarray(p, dtype=float)
    mu, sigma, xi = theta[:, 0], np.exp(theta[:, 1]), theta[:, 2]
    mu, sigma, xi, p = np.broadcast_arrays(mu, sigma, xi, p)
    w = -np.log(p)
    gum = np.abs(xi) <= threshold
    safe_xi = np.where(gum, 1.0, xi)
    gen = mu + sigma * np.expm1(-safe_xi * np.log(w)) / safe_xi
    out = np.where(gum, mu - sigma * np.log(w), gen)
    return out if out.size > 1 else float(out.ravel()[0])


def gev_cdf(y, theta, threshold=GUMBEL_THRESHOLD):
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    mu, sigma, xi = theta[:, 0], np.exp(theta[:, 1]), theta[:, 2]
    z = (np.asarray(y, dtype=float) - mu) / sigma
    gum = np.abs(xi) <= threshold
    safe_xi = np.where(gum, 1.0, xi)
    base = np.maximum(1.0 + safe_xi * z, 0.0)
    with np.errstate(divide="ignore"):
        gen = np.exp(-np.exp(-np.log(base) / safe_xi))
    out = np.where(gum, np.exp(-np.exp(-z)), gen)
    return out if out.size > 1 else float(out.ravel()[0])


FAMILIES = {
    "gaussian": Gaussian,
    "gaussian_fixed": FixedScaleGaussian,
    "poisson": Poisson,
    "exponential": Exponential,
    "gamma": Gamma,
    "binomial": Binomial,
    "gev": GEV,
}


def get_family(family, **kwargs):
    if isinstance(family, Family):
        return family
    if isinstance(family, dict):
        kwargs = {k: v for k, v in family.items() if k != "name"}
        family = family["name"]
    try:
        return FAMILIES[family](**kwargs)
    except KeyError:
        raise ValueError(
            f"unknown family {family!r}; expected one of {sorted(FAMILIES)}"
        ) from None


def loglik_derivs(family, y, theta):
    """Derivatives of the log-likelihood of a single observation."""
    family = get_family(family)
    ll, g, nh, t = family.derivatives(np.array([y], dtype=float), np.atleast_2d(theta))
    return DerivBundle(loglik=float(ll[0]), grad=g[0], neg_hess=nh[0], third=t[0])


def sample(family, theta, rng):
    family = get_family(family)
    return family.sample(np.atleast_2d(theta), rng)

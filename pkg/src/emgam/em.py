"""Smoothing parameter selection by approximate expectation-maximization.

Each outer iteration fits the penalized model at the current smoothing
parameters, then updates every unconverged parameter in closed form,

    lam_j <- rank(S_j) / c_j,
    c_j = b_j' S_j b_j + tr[H_P^{-1} (S_j + dH/dlam_j)],

where ``b_j`` is the coefficient block of term ``j`` and ``dH/dlam_j`` is
the derivative of the negative log-likelihood Hessian through the implicit
dependence of the estimate on ``lam_j``.  Only third derivatives of the
log-likelihood are needed.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .basis import penalty_rank
from .exceptions import InvalidCurvatureError, NonConvergenceError
from .solver import NewtonSettings, maximize_penalized

logger = logging.getLogger(__name__)


@dataclass
class EmSettings:
    """Outer-loop controls.

    A smoothing parameter is declared converged once the gradient of the
    marginal likelihood with respect to its logarithm, ``lam_j * G_j``,
    is below ``tol``.  It is also frozen once, at two consecutive fits, its
    next update would change the penalized log-likelihood by less than
    ``pll_tol * (1 + |l_P|)``.  Both tests are repeated at every outer
    iteration, so a frozen parameter resumes updating if they stop holding.
    """

    tol: float = 1e-4
    max_outer: int = 5000
    lam0: object = 1.0
    pll_tol: float = 1e-8
    freeze: bool = True
    threads: int = 1
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if np.any(np.asarray(self.lam0, dtype=float) <= 0):
            raise ValueError("initial smoothing parameters must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class EmIterate:
    outer_index: int
    lam: np.ndarray
    c: np.ndarray
    oakes: np.ndarray
    converged: np.ndarray
    loglik_pen: float


@dataclass
class FitResult:
    beta: np.ndarray
    lam: np.ndarray
    posterior_cov: np.ndarray
    design: object
    family: object
    fit: object
    trajectory: list
    converged: bool
    n_outer: int
    edf: np.ndarray
    edf_total: float

    @property
    def loglik_pen(self):
        return self.fit.loglik_pen

    @property
    def dropped(self):
        return self.fit.dropped


class MStep:
    """Quantities shared by all per-term updates at one inner fit.

    Holds the inverse penalized Hessian on the identifiable coefficients
    and the vector ``r`` such that ``tr(H_P^{-1} dH/dlam_j) = -r @ v_j``
    for ``v_j = dbeta/dlam_j``.
    """

    def __init__(self, design, family, fit):
        self.design = design
        self.fit = fit
        p = design.p
        kept = fit.kept
        Hk = fit.H_P[np.ix_(kept, kept)]
        cho = linalg.cho_factor(Hk)
        Hinv = np.zeros((p, p))
        Hinv[np.ix_(kept, kept)] = linalg.cho_solve(cho, np.eye(kept.size))
        self.Hinv = 0.5 * (Hinv + Hinv.T)

        theta = design.linear_predictors(fit.beta)
        third = family.derivatives(design.y, theta, order=3)[3]
        blocks = design.blocks
        D = len(blocks)
        n = design.n
        lev = np.empty((n, D, D))
        for a in range(D):
            Xa = blocks[a].X
            for b in range(a, D):
                M = Xa @ self.Hinv[blocks[a].slice, blocks[b].slice]
                lev[:, a, b] = np.einsum("ij,ij->i", M, blocks[b].X)
                lev[:, b, a] = lev[:, a, b]
        tau = np.einsum("iabc,iab->ic", third, lev)
        self.r = np.concatenate([blk.X.T @ tau[:, c] for c, blk in enumerate(blocks)])

    def dbeta(self, j):
        """Derivative of the penalized estimate with respect to ``lam_j``."""
        pen = self.design.penalties[j]
        Sb = np.zeros(self.design.p)
        Sb[pen.slice] = pen.S @ self.fit.beta[pen.slice]
        return -self.Hinv @ Sb

    def c(self, j):
        pen = self.design.penalties[j]
        b = self.fit.beta[pen.slice]
        quad = float(b @ pen.S @ b)
        tr_S = float(np.sum(self.Hinv[pen.slice, pen.slice] * pen.S))
        tr_dH = -float(self.r @ self.dbeta(j))
        value = quad + tr_S + tr_dH
        if not value > 0:
            raise InvalidCurvatureError(j, value)
        return value

    def all_c(self, which=None, threads=1):
        which = range(self.design.q) if which is None else which
        which = list(which)
        if threads > 1 and len(which) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                vals = list(ex.map(self.c, which))
        else:
            vals = [self.c(j) for j in which]
        out = np.full(self.design.q, np.nan)
        out[which] = vals
        return out


def compute_c(design, family, fit, j):
    """c value of smoothing parameter ``j`` at a converged inner fit."""
    if j < 0 or j >= design.q:
        raise IndexError(f"smoothing parameter index {j} out of range")
    return MStep(design, family, fit).c(j)


def update_lambda(c, ranks):
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise InvalidCurvatureError(int(np.argmax(c <= 0)), float(c[c <= 0][0]))
    return np.asarray(ranks, dtype=float) / c


def oakes_gradient(c_prev, c_next):
    """Marginal-likelihood gradient at the new iterate, per parameter."""
    return 0.5 * (np.asarray(c_prev, dtype=float) - np.asarray(c_next, dtype=float))


def effective_ranks(design, fit):
    """Penalty ranks restricted to coefficients still in the model."""
    ranks = design.ranks.copy()
    if fit.dropped.size == 0:
        return ranks
    keep = np.ones(design.p, dtype=bool)
    keep[fit.dropped] = False
    for j, pen in enumerate(design.penalties):
        mask = keep[pen.slice]
        if not mask.all():
            ranks[j] = penalty_rank(pen.S[np.ix_(mask, mask)])
    return ranks


def initial_beta(design, family):
    beta = np.zeros(design.p)
    start = family.init_intercepts(design.y)
    for d, blk in enumerate(design.blocks):
        if blk.spec.intercept:
            off = 0.0 if blk.offset is None else float(np.mean(blk.offset))
            beta[blk.start] = start[d] - off
    return beta


def _result(design, family, fit, lam, trajectory, converged, n_outer):
    ms_H = fit.H_P[np.ix_(fit.kept, fit.kept)]
    p = design.p
    cov = np.zeros((p, p))
    ck = linalg.cho_solve(linalg.cho_factor(ms_H), np.eye(fit.kept.size))
    cov[np.ix_(fit.kept, fit.kept)] = 0.5 * (ck + ck.T)
    H_data = fit.H_P - design.penalty_matrix(lam)
    F = np.einsum("ij,ji->i", cov, H_data)
    edf = np.array([F[pen.slice].sum() for pen in design.penalties])
    return FitResult(
        beta=fit.beta,
        lam=np.asarray(lam, dtype=float).copy(),
        posterior_cov=cov,
        design=design,
        family=family,
        fit=fit,
        trajectory=trajectory,
        converged=converged,
        n_outer=n_outer,
        edf=edf,
        edf_total=float(F.sum()),
    )


def em_fit(design, family=None, settings=None, beta0=None):
    """Fit coefficients and smoothing parameters.

    Alternates a fully converged penalized fit (warm started from the
    previous estimate) with closed-form smoothing-parameter updates until
    every parameter has converged or been frozen.
    """
    family = family or design.family
    settings = settings or EmSettings()
    q = design.q
    beta = initial_beta(design, family) if beta0 is None else np.asarray(beta0, float)
    lam = np.broadcast_to(np.asarray(settings.lam0, dtype=float), (q,)).copy()

    def inner(lam_k, beta_k, dropped, k):
        try:
            return maximize_penalized(
                design, family, lam_k, beta_k, settings.newton, dropped=dropped
            )
        except NonConvergenceError as exc:
            best = None
            if exc.best is not None:
                try:
                    best = _result(design, family, exc.best, lam_k, trajectory, False, k)
                except linalg.LinAlgError:
                    pass
            raise NonConvergenceError(
                f"inner fit failed at outer iteration {k}: {exc}",
                best=best,
                trajectory=trajectory,
            ) from exc

    trajectory = []
    fit = inner(lam, beta, (), 0)
    if q == 0:
        return _result(design, family, fit, lam, trajectory, True, 0)

    ms = MStep(design, family, fit)
    c = ms.all_c(threads=settings.threads)
    active = np.ones(q, dtype=bool)
    quiet = np.zeros(q, dtype=int)
    trajectory.append(
        EmIterate(0, lam.copy(), c.copy(), np.full(q, np.nan), ~active, fit.loglik_pen)
    )

    for k in range(1, settings.max_outer + 1):
        ranks = effective_ranks(design, fit)
        lam_new = lam.copy()
        lam_new[active] = update_lambda(c[active], ranks[active])

        fit = inner(lam_new, fit.beta, fit.dropped, k)
        ms = MStep(design, family, fit)
        c_new = ms.all_c(threads=settings.threads)
        ranks = effective_ranks(design, fit)
        grad = 0.5 * (ranks / lam_new - c_new)
        done = np.abs(lam_new * grad) < settings.tol
        if settings.freeze:
            # l_P change the next update would cause, to first order
            quad = np.array(
                [fit.beta[p.slice] @ p.S @ fit.beta[p.slice] for p in design.penalties]
            )
            effect = 0.5 * np.abs(ranks / c_new - lam_new) * quad
            small = effect < settings.pll_tol * (1.0 + abs(fit.loglik_pen))
            quiet = np.where(small, quiet + 1, 0)
            done |= quiet >= 2
        # frozen parameters are re-examined every iteration: moving the
        # others can make a previously converged one worth updating again
        active = ~done
        lam, c = lam_new, c_new
        trajectory.append(EmIterate(k, lam.copy(), c.copy(), grad, done, fit.loglik_pen))
        logger.debug("outer %d: l_P=%.6f lam=%s", k, fit.loglik_pen, lam)
        if not active.any():
            return _result(design, family, fit, lam, trajectory, True, k)

    best = _result(design, family, fit, lam, trajectory, False, settings.max_outer)
    raise NonConvergenceError(
        f"smoothing parameters did not converge in {settings.max_outer} outer iterations",
        best=best,
        trajectory=trajectory,
    )

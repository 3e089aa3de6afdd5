"""Penalized likelihood maximization for fixed smoothing parameters."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .design import accumulate
from .exceptions import (
    IdentifiabilityError,
    NonConvergenceError,
    StalledError,
    SupportError,
)

QR_RANK_TOL = 1e-10


@dataclass
class NewtonSettings:
    """Controls for the inner Newton iteration.

    ``grad_tol`` and ``eig_floor`` are relative: the absolute thresholds are
    ``grad_tol * (1 + |l_P|)`` and ``eig_floor * (1 + max |diag(H_P)|)``.

    ``decrement_tol`` applies only when step halving fails to increase the
    penalized log-likelihood.  If the predicted Newton increase is then below
    ``decrement_tol * (1 + |l_P|)`` the iterate is accepted as converged:
    the objective is flat to within what it can resolve (for the GEV, the
    Gumbel branch switch makes it piecewise smooth at that scale).
    """

    grad_tol: float = 1e-7
    max_iter: int = 200
    max_halvings: int = 30
    eig_floor: float = 1e-7
    init_rate: float = 1.0
    decrement_tol: float = 1e-9

    def __post_init__(self):
        names = ("grad_tol", "max_iter", "max_halvings", "eig_floor", "init_rate",
                 "decrement_tol")
        for name in names:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.init_rate > 1:
            raise ValueError("init_rate must be <= 1")


@dataclass
class PenalizedFit:
    beta: np.ndarray
    loglik_pen: float
    loglik: float
    H_P: np.ndarray
    U_P: np.ndarray
    lam: np.ndarray
    kept: np.ndarray
    dropped: np.ndarray
    rank: int
    iterations: int
    halvings_used: int
    converged: bool = True
    history: list = field(default_factory=list)


def stabilize(H, eig_floor):
    """Raise eigenvalues of symmetric ``H`` below ``eig_floor`` to the floor."""
    H = np.asarray(H, dtype=float)
    w, V = np.linalg.eigh(H)
    if w.size == 0 or w.min() >= eig_floor:
        return H.copy()
    w = np.maximum(w, eig_floor)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


def _newton_direction(H, U, floor):
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, floor)
    return V @ ((V.T @ U) / w)


def detect_identifiability(H_P, tol=QR_RANK_TOL):
    """Rank-revealing pivoted QR of the penalized Hessian.

    The matrix is first scaled to unit diagonal so the relative pivot test
    does not depend on the units of individual coefficients.  Returns
    ``(rank, permutation, kept, dropped)`` with index arrays into ``H_P``.
    """
    H_P = np.asarray(H_P, dtype=float)
    p = H_P.shape[0]
    if p == 0:
        raise IdentifiabilityError()
    d = np.sqrt(np.abs(np.diag(H_P)))
    d[d == 0] = 1.0
    Hs = H_P / d[:, None] / d[None, :]
    _, R, perm = linalg.qr(Hs, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        raise IdentifiabilityError()
    r = int(np.sum(diag > tol * diag[0]))
    if r == 0:
        raise IdentifiabilityError()
    return r, perm, np.sort(perm[:r]), np.sort(perm[r:])


def _pen_loglik(design, family, beta, S):
    ll = accumulate(design, family, beta, order=0)[0]
    return ll - 0.5 * beta @ S @ beta, ll


def maximize_penalized(design, family, lam, beta0=None, settings=None, dropped=()):
    """Maximize the penalized log-likelihood by damped Newton-Raphson.

    Each iteration floors the eigenvalues of the penalized negative Hessian,
    takes the Newton step and halves the step length until the penalized
    log-likelihood increases.  Trial points outside the support of the
    response distribution are treated as failures to increase.  At
    convergence the penalized Hessian is checked for rank deficiency and
    unidentifiable coefficients are fixed at zero before iterating again.
    """
    settings = settings or NewtonSettings()
    lam = np.asarray(lam, dtype=float)
    p = design.p
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    S = design.penalty_matrix(lam)
    drop = np.zeros(p, dtype=bool)
    drop[list(dropped)] = True
    beta[drop] = 0.0
    kept = np.flatnonzero(~drop)

    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            lp, ll = _pen_loglik(design, family, beta, S)
    except SupportError as exc:
        raise NonConvergenceError(
            f"starting values outside support: {exc}", best=None
        ) from exc
    if not np.isfinite(lp):
        raise NonConvergenceError(
            "penalized log-likelihood is not finite at the starting values", best=None
        )

    history = [lp]
    stalled = False
    polished = False
    halvings_used = 0
    it = 0
    while True:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            ll, U, H = accumulate(design, family, beta, order=2)
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(H))):
            raise NonConvergenceError(
                f"non-finite score or Hessian after {it} Newton steps", best=None
            )
        lp = ll - 0.5 * beta @ S @ beta
        U_P = U - S @ beta
        H_P = H + S
        Uk = U_P[kept]
        Hk = H_P[np.ix_(kept, kept)]
        scale = 1.0 + abs(lp)
        # the floor follows the curvature of the data, not of the penalty,
        # so very large smoothing parameters do not flatten other directions
        h_max = np.abs(np.diag(H)[kept]).max(initial=0.0)
        floor = settings.eig_floor * (1.0 + h_max)
        delta = _newton_direction(Hk, Uk, floor)
        gain = float(delta @ Uk)

        done = np.max(np.abs(Uk), initial=0.0) < settings.grad_tol * scale
        if not done and not polished and gain < 1e-13 * scale:
            # The predicted increase is below what double precision resolves
            # in l_P, so step halving cannot judge the step.  Take the full
            # Newton step once, unless it visibly lowers l_P.
            polished = True
            trial = beta.copy()
            trial[kept] += delta
            try:
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    lp_new, _ = _pen_loglik(design, family, trial, S)
            except SupportError:
                lp_new = -np.inf
            if np.isfinite(lp_new) and lp_new >= lp - 1e-12 * scale:
                beta = trial
                if lp_new > lp:
                    history.append(lp_new)
                continue
        done = done or polished
        if done or stalled:
            r, _, k_rel, d_rel = detect_identifiability(Hk)
            if d_rel.size:
                drop[kept[d_rel]] = True
                beta[drop] = 0.0
                kept = np.flatnonzero(~drop)
                lp, ll = _pen_loglik(design, family, beta, S)
                stalled = polished = False
                continue
            return PenalizedFit(
                beta=beta,
                loglik_pen=lp,
                loglik=ll,
                H_P=H_P,
                U_P=U_P,
                lam=lam.copy(),
                kept=kept,
                dropped=np.flatnonzero(drop),
                rank=r,
                iterations=it,
                halvings_used=halvings_used,
                history=history,
            )

        if it >= settings.max_iter:
            best = PenalizedFit(
                beta=beta, loglik_pen=lp, loglik=ll, H_P=H_P, U_P=U_P, lam=lam.copy(),
                kept=kept, dropped=np.flatnonzero(drop), rank=kept.size,
                iterations=it, halvings_used=halvings_used, converged=False,
                history=history,
            )
            raise NonConvergenceError(
                f"Newton iteration did not converge in {settings.max_iter} steps", best=best
            )
        it += 1

        rate = settings.init_rate
        accepted = False
        for h in range(settings.max_halvings + 1):
            trial = beta.copy()
            trial[kept] += rate * delta
            try:
                # wild trial steps can overflow; they are then rejected
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    lp_new, ll_new = _pen_loglik(design, family, trial, S)
            except SupportError:
                lp_new = -np.inf
            if np.isfinite(lp_new) and lp_new > lp:
                accepted = True
                halvings_used += h
                break
            rate *= 0.5
        if not accepted and gain < settings.decrement_tol * scale:
            stalled = True
            continue
        if not accepted:
            best = PenalizedFit(
                beta=beta, loglik_pen=lp, loglik=ll, H_P=H_P, U_P=U_P, lam=lam.copy(),
                kept=kept, dropped=np.flatnonzero(drop), rank=kept.size,
                iterations=it, halvings_used=halvings_used, converged=False,
                history=history,
            )
            raise StalledError(
                "step halving exhausted without increasing the penalized log-likelihood",
                best=best,
            )
        beta = trial
        history.append(lp_new)

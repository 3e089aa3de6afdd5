"""Spline bases and curvature penalties for one-dimensional smooth terms.

Three kinds are supported:

``cubic-regression``
    Natural cubic spline parametrised by its values at evenly spaced knots.
``cyclic-cubic``
    Periodic cubic spline; the first and last knots are identified.
``thin-plate``
    Order-2 thin-plate regression spline in one dimension, obtained by
    eigen-truncation of the full thin-plate basis over the data locations.

Every term absorbs a sum-to-zero constraint so that it is not confounded
with the intercept of the linear predictor it belongs to.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import BasisSizeError, ConstantPredictorError

KINDS = ("cubic-regression", "cyclic-cubic", "thin-plate")

_ALIASES = {
    "cr": "cubic-regression",
    "cubic": "cubic-regression",
    "cc": "cyclic-cubic",
    "cyclic": "cyclic-cubic",
    "tp": "thin-plate",
    "tps": "thin-plate",
}

RANK_TOL = 1e-7
# cap on thin-plate knots; beyond it a quantile subset of the data is used
MAX_TP_KNOTS = 2000


def normalize_kind(kind):
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class BasisSpec:
    """Declaration of a smooth term.

    ``period`` is only used by the cyclic kind and gives the interval
    ``(lo, hi)`` whose endpoints are identified.  When omitted the observed
    range of the predictor is used.
    """

    kind: str = "cubic-regression"
    k: int = 10
    predictor: object = None
    knot_rule: str = "even-in-range"
    period: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if int(self.k) != self.k or self.k < 4:
            raise ValueError(f"basis dimension must be an integer >= 4, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if self.knot_rule != "even-in-range":
            raise ValueError(f"unsupported knot rule {self.knot_rule!r}")
        if self.period is not None:
            lo, hi = (float(v) for v in self.period)
            if not hi > lo:
                raise ValueError("period must satisfy hi > lo")
            object.__setattr__(self, "period", (lo, hi))


def _check_x(x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("predictor is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("predictor contains non-finite values")
    return x


def place_knots(x, k, kind="cubic-regression", period=None):
    """Evenly spaced knots over the observed range of ``x``.

    For the cyclic kind ``k + 1`` abscissae are returned spanning the
    period; the first and last are the same point on the circle, so the
    spline has ``k`` free coefficients.  For thin-plate splines the knots
    are the distinct data locations (a quantile subset if there are more
    than ``MAX_TP_KNOTS``).
    """
    kind = normalize_kind(kind)
    x = _check_x(x)
    lo, hi = float(x.min()), float(x.max())
    if kind == "cyclic-cubic":
        if period is not None:
            lo_p, hi_p = period
            if lo < lo_p or hi > hi_p:
                raise ValueError(
                    f"period ({lo_p}, {hi_p}) does not cover data range ({lo}, {hi})"
                )
            lo, hi = lo_p, hi_p
        if not hi > lo:
            raise ConstantPredictorError()
        return np.linspace(lo, hi, k + 1)
    if not hi > lo:
        raise ConstantPredictorError()
    if kind == "cubic-regression":
        return np.linspace(lo, hi, k)
    u = np.unique(x)
    if u.size > MAX_TP_KNOTS:
        idx = np.round(np.linspace(0, u.size - 1, MAX_TP_KNOTS)).astype(int)
        u = u[idx]
    return u


# --- cubic regression spline -------------------------------------------------


def _cr_matrices(knots):
    """Map from knot values to knot second derivatives, and the penalty."""
    k = knots.size
    h = np.diff(knots)
    D = np.zeros((k - 2, k))
    B = np.zeros((k - 2, k - 2))
    for i in range(k - 2):
        D[i, i] = 1.0 / h[i]
        D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
        D[i, i + 2] = 1.0 / h[i + 1]
        B[i, i] = (h[i] + h[i + 1]) / 3.0
        if i < k - 3:
            B[i, i + 1] = B[i + 1, i] = h[i + 1] / 6.0
    F = np.zeros((k, k))
    F[1:-1] = np.linalg.solve(B, D)
    S = D.T @ F[1:-1]
    return F, 0.5 * (S + S.T)


def _cubic_pieces(x, left, right, deriv):
    """Weights on (value_left, value_right, curv_left, curv_right)."""
    h = right - left
    dl = right - x
    dr = x - left
    if deriv == 0:
        return dl / h, dr / h, (dl**3 / h - h * dl) / 6.0, (dr**3 / h - h * dr) / 6.0
    if deriv == 1:
        return (
            -1.0 / h,
            1.0 / h,
            (-3.0 * dl**2 / h + h) / 6.0,
            (3.0 * dr**2 / h - h) / 6.0,
        )
    if deriv == 2:
        z = np.zeros_like(x)
        return z, z, dl / h, dr / h
    raise ValueError("deriv must be 0, 1 or 2")


def _cr_eval(x, knots, F, deriv=0):
    k = knots.size
    x = np.asarray(x, dtype=float)
    n = x.size
    j = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, k - 2)
    xc = np.clip(x, knots[0], knots[-1])
    rows = np.arange(n)
    X = np.zeros((n, k))
    am, ap, cm, cp = _cubic_pieces(xc, knots[j], knots[j + 1], deriv)
    X[rows, j] += am
    X[rows, j + 1] += ap
    X += cm[:, None] * F[j] + cp[:, None] * F[j + 1]

    # linear continuation beyond the boundary knots
    out_lo = x < knots[0]
    out_hi = x > knots[-1]
    if out_lo.any() or out_hi.any():
        h0 = knots[1] - knots[0]
        h1 = knots[-1] - knots[-2]
        slope_lo = np.zeros(k)
        slope_lo[0] -= 1.0 / h0
        slope_lo[1] += 1.0 / h0
        slope_lo += -h0 / 3.0 * F[0] - h0 / 6.0 * F[1]
        slope_hi = np.zeros(k)
        slope_hi[-2] -= 1.0 / h1
        slope_hi[-1] += 1.0 / h1
        slope_hi += h1 / 6.0 * F[-2] + h1 / 3.0 * F[-1]
        for mask, slope, edge in ((out_lo, slope_lo, 0), (out_hi, slope_hi, k - 1)):
            if not mask.any():
                continue
            if deriv == 0:
                base = np.zeros(k)
                base[edge] = 1.0
                X[mask] = base + (x[mask] - knots[edge])[:, None] * slope
            elif deriv == 1:
                X[mask] = slope
            else:
                X[mask] = 0.0
    return X


# --- cyclic cubic spline -----------------------------------------------------


def _cc_matrices(knots):
    k = knots.size - 1
    h = np.diff(knots)
    B = np.zeros((k, k))
    D = np.zeros((k, k))
    for i in range(k):
        hm = h[i - 1]
        hp = h[i]
        B[i, i] += (hm + hp) / 3.0
        B[i, (i + 1) % k] += hp / 6.0
        B[i, (i - 1) % k] += hm / 6.0
        D[i, (i + 1) % k] += 1.0 / hp
        D[i, i] += -1.0 / hp - 1.0 / hm
        D[i, (i - 1) % k] += 1.0 / hm
    F = np.linalg.solve(B, D)
    S = D.T @ F
    return F, 0.5 * (S + S.T)


def _cc_eval(x, knots, F, deriv=0):
    k = knots.size - 1
    lo = knots[0]
    period = knots[-1] - knots[0]
    x = np.asarray(x, dtype=float)
    xm = lo + np.mod(x - lo, period)
    n = x.size
    j = np.clip(np.searchsorted(knots, xm, side="right") - 1, 0, k - 1)
    jp = (j + 1) % k
    rows = np.arange(n)
    X = np.zeros((n, k))
    am, ap, cm, cp = _cubic_pieces(xm, knots[j], knots[j + 1], deriv)
    X[rows, j] += am
    X[rows, jp] += ap
    X += cm[:, None] * F[j] + cp[:, None] * F[jp]
    return X


# --- thin-plate regression spline --------------------------------------------


def _tp_radial(x, knots):
    r = np.abs(np.asarray(x, dtype=float)[:, None] - knots[None, :])
    return r**3 / 12.0


def _tp_setup(knots, k):
    """Eigen-truncated order-2 thin-plate basis over ``knots``.

    Returns the (m, k-2) map from radial evaluations to wiggly basis
    functions and the corresponding (k-2, k-2) penalty.
    """
    m = knots.size
    E = _tp_radial(knots, knots)
    evals, evecs = np.linalg.eigh(E)
    order = np.argsort(-np.abs(evals), kind="stable")[:k]
    Uk = evecs[:, order]
    Dk = evals[order]
    T = np.column_stack([np.ones(m), knots])
    M = Uk.T @ T
    q, _ = np.linalg.qr(M, mode="complete")
    Zt = q[:, 2:]
    transform = Uk @ Zt
    S = Zt.T @ (Dk[:, None] * Zt)
    return transform, 0.5 * (S + S.T)


# --- constraint absorption ---------------------------------------------------


def absorb_constraint(B_raw, S_raw):
    """Absorb the sum-to-zero constraint on the fitted values of a term.

    Returns ``(B, S, Z)`` where ``Z`` is an orthonormal basis for the null
    space of the column sums of ``B_raw``.
    """
    B_raw = np.asarray(B_raw, dtype=float)
    colsum = B_raw.sum(axis=0)
    q, _ = np.linalg.qr(colsum[:, None], mode="complete")
    Z = q[:, 1:]
    S = Z.T @ S_raw @ Z
    return B_raw @ Z, 0.5 * (S + S.T), Z


def penalty_rank(S, tol=RANK_TOL):
    ev = np.linalg.eigvalsh(S)
    top = ev.max(initial=0.0)
    if top <= 0:
        return 0
    return int(np.sum(ev > tol * top))


@dataclass(eq=False)
class SmoothTermDesign:
    """A constructed smooth term.

    ``B`` is the constrained basis at the training data, ``S`` the penalty
    on the constrained coefficients and ``Z`` the constraint transform.
    Use :meth:`evaluate` for new predictor values.
    """

    spec: BasisSpec
    knots: np.ndarray
    Z: np.ndarray
    S: np.ndarray
    S_raw: np.ndarray
    penalty_rank: int
    B: np.ndarray = field(default=None, repr=False)
    tp_transform: np.ndarray = field(default=None, repr=False)
    # thin-plate terms are built in standardized coordinates (x - center) / scale
    tp_center: float = 0.0
    tp_scale: float = 1.0
    _F: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec.kind == "cubic-regression":
            self._F, _ = _cr_matrices(self.knots)
        elif self.spec.kind == "cyclic-cubic":
            self._F, _ = _cc_matrices(self.knots)

    @property
    def kind(self):
        return self.spec.kind

    @property
    def n_coef(self):
        return self.Z.shape[1]

    @property
    def bounds(self):
        if self.kind == "thin-plate":
            return float(self.knots.min()), float(self.knots.max())
        return float(self.knots[0]), float(self.knots[-1])

    def raw_basis(self, x, deriv=0):
        """Unconstrained basis (or its derivative) at ``x``."""
        x = np.asarray(x, dtype=float).ravel()
        if self.kind == "cubic-regression":
            return _cr_eval(x, self.knots, self._F, deriv)
        if self.kind == "cyclic-cubic":
            return _cc_eval(x, self.knots, self._F, deriv)
        if deriv != 0:
            raise NotImplementedError("derivatives of thin-plate bases")
        u = (x - self.tp_center) / self.tp_scale
        knots_u = (self.knots - self.tp_center) / self.tp_scale
        wiggly = _tp_radial(u, knots_u) @ self.tp_transform
        return np.column_stack([wiggly, np.ones(x.size), u])

    def evaluate(self, x):
        return self.raw_basis(x) @ self.Z

    def outside(self, x):
        """Mask of values outside the range covered by the knots."""
        x = np.asarray(x, dtype=float).ravel()
        lo, hi = self.bounds
        return (x < lo) | (x > hi)

    def to_dict(self):
        d = {
            "kind": self.kind,
            "k": self.spec.k,
            "predictor": self.spec.predictor,
            "period": list(self.spec.period) if self.spec.period else None,
            "knots": self.knots.tolist(),
            "Z": self.Z.tolist(),
            "S": self.S.tolist(),
            "S_raw": self.S_raw.tolist(),
            "penalty_rank": self.penalty_rank,
        }
        if self.tp_transform is not None:
            d["tp_transform"] = self.tp_transform.tolist()
            d["tp_center"] = self.tp_center
            d["tp_scale"] = self.tp_scale
        return d

    @classmethod
    def from_dict(cls, d):
        spec = BasisSpec(
            kind=d["kind"],
            k=d["k"],
            predictor=d["predictor"],
            period=tuple(d["period"]) if d.get("period") else None,
        )
        tpt = d.get("tp_transform")
        return cls(
            spec=spec,
            knots=np.asarray(d["knots"], dtype=float),
            Z=np.asarray(d["Z"], dtype=float),
            S=np.asarray(d["S"], dtype=float),
            S_raw=np.asarray(d["S_raw"], dtype=float),
            penalty_rank=int(d["penalty_rank"]),
            tp_transform=None if tpt is None else np.asarray(tpt, dtype=float),
            tp_center=float(d.get("tp_center", 0.0)),
            tp_scale=float(d.get("tp_scale", 1.0)),
        )


def build_term(x, spec):
    """Construct basis, penalty and constraint for one smooth term."""
    x = _check_x(x)
    n = x.size
    if n < spec.k:
        raise BasisSizeError(n, spec.k)
    knots = place_knots(x, spec.k, spec.kind, spec.period)
    tp_transform = None
    center, scale = 0.0, 1.0
    if spec.kind == "cubic-regression":
        _, S_raw = _cr_matrices(knots)
    elif spec.kind == "cyclic-cubic":
        _, S_raw = _cc_matrices(knots)
    else:
        if knots.size < spec.k:
            raise BasisSizeError(knots.size, spec.k)
        center = 0.5 * (knots[0] + knots[-1])
        scale = 0.5 * (knots[-1] - knots[0])
        tp_transform, S_w = _tp_setup((knots - center) / scale, spec.k)
        S_raw = np.zeros((spec.k, spec.k))
        S_raw[: spec.k - 2, : spec.k - 2] = S_w

    term = SmoothTermDesign(
        spec=spec,
        knots=knots,
        Z=np.eye(spec.k),
        S=S_raw,
        S_raw=S_raw,
        penalty_rank=0,
        tp_transform=tp_transform,
        tp_center=center,
        tp_scale=scale,
    )
    B_raw = term.raw_basis(x)
    _, S, Z = absorb_constraint(B_raw, S_raw)
    term.Z = Z
    term.S = S
    term.penalty_rank = penalty_rank(S)
    # recompute through the public evaluation path so predictions at the
    # training data are bit-identical to the training basis
    term.B = term.evaluate(x)
    return term

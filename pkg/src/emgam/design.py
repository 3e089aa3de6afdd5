"""Assembly of multi-parameter designs and likelihood accumulation.

Each distribution parameter ``d`` owns a feature block ``X[d]`` (intercept,
unpenalized linear columns, ridge-penalized columns and smooth bases) and a
contiguous slice of the full coefficient vector.  The stacked ``nD x p``
matrix is never formed; score and Hessian are accumulated block by block.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, SmoothTermDesign, build_term
from .families import get_family


@dataclass(frozen=True)
class ParameterSpec:
    """Terms of one linear predictor.

    ``smooths`` is a sequence of :class:`BasisSpec` whose ``predictor`` names
    a data column.  ``linear`` columns enter unpenalized, ``ridge`` columns
    share a single identity penalty.  ``offset`` names a column added to the
    predictor with a fixed unit coefficient.
    """

    smooths: tuple = ()
    linear: tuple = ()
    ridge: tuple = ()
    intercept: bool = True
    offset: object = None

    def __post_init__(self):
        object.__setattr__(self, "smooths", tuple(self.smooths))
        object.__setattr__(self, "linear", tuple(self.linear))
        object.__setattr__(self, "ridge", tuple(self.ridge))
        for s in self.smooths:
            if not isinstance(s, BasisSpec):
                raise TypeError("smooths must be BasisSpec instances")
            if s.predictor is None:
                raise ValueError("smooth term without a predictor column")

    def columns(self):
        cols = [s.predictor for s in self.smooths] + list(self.linear) + list(self.ridge)
        if self.offset is not None:
            cols.append(self.offset)
        return cols


@dataclass(frozen=True)
class ModelSpec:
    family: object
    params: tuple
    response: object = "y"

    def __post_init__(self):
        fam = get_family(self.family)
        object.__setattr__(self, "family", fam)
        params = tuple(self.params)
        if len(params) != fam.D:
            raise ValueError(
                f"family {fam.name} has {fam.D} parameters, got {len(params)} blocks"
            )
        object.__setattr__(self, "params", params)


def get_column(data, key):
    """Fetch a column from a mapping, DataFrame or 2-D array."""
    if isinstance(key, (int, np.integer)) and not isinstance(data, dict):
        try:
            arr = np.asarray(data[:, key], dtype=float)
        except (TypeError, IndexError, KeyError):
            arr = np.asarray(data[key], dtype=float)
    else:
        try:
            arr = np.asarray(data[key], dtype=float)
        except (KeyError, IndexError, ValueError):
            raise KeyError(f"missing column {key!r}") from None
    arr = arr.ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"column {key!r} contains non-finite values")
    return arr


@dataclass(eq=False)
class Penalty:
    """One smoothing parameter's penalty, embedded in the coefficient vector."""

    name: str
    param: int
    start: int
    stop: int
    S: np.ndarray
    rank: int

    @property
    def slice(self):
        return slice(self.start, self.stop)


@dataclass(eq=False)
class ParamBlock:
    spec: ParameterSpec
    X: np.ndarray
    start: int
    stop: int
    names: list
    smooth_terms: list = field(default_factory=list)
    smooth_slices: list = field(default_factory=list)
    offset: np.ndarray = None

    @property
    def slice(self):
        return slice(self.start, self.stop)


@dataclass(eq=False)
class ModelDesign:
    family: object
    spec: ModelSpec
    blocks: list
    penalties: list
    n: int
    y: np.ndarray = field(default=None, repr=False)

    @property
    def p(self):
        return self.blocks[-1].stop if self.blocks else 0

    @property
    def q(self):
        return len(self.penalties)

    @property
    def m(self):
        """Dimension of the null space of the full penalty."""
        return self.p - sum(pen.rank for pen in self.penalties)

    @property
    def ranks(self):
        return np.array([pen.rank for pen in self.penalties], dtype=float)

    @property
    def coef_names(self):
        return [name for b in self.blocks for name in b.names]

    def penalty_matrix(self, lam):
        lam = np.asarray(lam, dtype=float)
        S = np.zeros((self.p, self.p))
        for lj, pen in zip(lam, self.penalties):
            S[pen.slice, pen.slice] += lj * pen.S
        return S

    def penalty_value(self, beta, lam):
        """beta' S_lambda beta, summed term by term."""
        return sum(
            lj * (beta[pen.slice] @ pen.S @ beta[pen.slice])
            for lj, pen in zip(lam, self.penalties)
        )

    def linear_predictors(self, beta, X_blocks=None, offsets=None):
        X_blocks = X_blocks if X_blocks is not None else [b.X for b in self.blocks]
        if offsets is None:
            offsets = [b.offset for b in self.blocks]
        cols = []
        for b, X, off in zip(self.blocks, X_blocks, offsets):
            eta = X @ beta[b.slice]
            if off is not None:
                eta = eta + off
            cols.append(eta)
        return np.column_stack(cols)

    def feature_blocks(self, data):
        """Feature blocks and offsets for new data, plus an extrapolation mask."""
        X_blocks, offsets = [], []
        n = None
        outside = None
        for b in self.blocks:
            parts = []
            if b.spec.intercept:
                parts.append(None)
            for col in b.spec.linear:
                parts.append(get_column(data, col)[:, None])
            for col in b.spec.ridge:
                parts.append(get_column(data, col)[:, None])
            for term in b.smooth_terms:
                x = get_column(data, term.spec.predictor)
                parts.append(term.evaluate(x))
                o = term.outside(x)
                outside = o if outside is None else outside | o
            n = _infer_n(parts, data, b)
            parts = [np.ones((n, 1)) if p is None else p for p in parts]
            X_blocks.append(np.hstack(parts) if parts else np.zeros((n, 0)))
            offsets.append(
                None if b.spec.offset is None else get_column(data, b.spec.offset)
            )
        if outside is None:
            outside = np.zeros(n, dtype=bool)
        return X_blocks, offsets, outside

    def to_dict(self):
        return {
            "params": [
                {
                    "intercept": b.spec.intercept,
                    "linear": list(b.spec.linear),
                    "ridge": list(b.spec.ridge),
                    "offset": b.spec.offset,
                    "smooths": [t.to_dict() for t in b.smooth_terms],
                }
                for b in self.blocks
            ]
        }

    @classmethod
    def from_dict(cls, d, family):
        """Rebuild a design (without training matrices) from :meth:`to_dict`."""
        family = get_family(family)
        blocks, penalties = [], []
        start = 0
        specs = []
        for di, pd_ in enumerate(d["params"]):
            terms = [SmoothTermDesign.from_dict(t) for t in pd_["smooths"]]
            pspec = ParameterSpec(
                smooths=tuple(t.spec for t in terms),
                linear=tuple(pd_["linear"]),
                ridge=tuple(pd_["ridge"]),
                intercept=pd_["intercept"],
                offset=pd_["offset"],
            )
            specs.append(pspec)
            names, slices, pens = _layout(pspec, terms, di, family, start)
            stop = start + len(names)
            blocks.append(
                ParamBlock(
                    spec=pspec,
                    X=None,
                    start=start,
                    stop=stop,
                    names=names,
                    smooth_terms=terms,
                    smooth_slices=slices,
                )
            )
            penalties.extend(pens)
            start = stop
        spec = ModelSpec(family=family, params=tuple(specs))
        return cls(family=family, spec=spec, blocks=blocks, penalties=penalties, n=0)


def _infer_n(parts, data, block):
    for p in parts:
        if p is not None:
            return p.shape[0]
    # intercept-only block: take the length from any column of the data
    if hasattr(data, "shape") and len(getattr(data, "shape", ())) >= 1:
        return int(data.shape[0])
    if hasattr(data, "values"):
        for v in data.values():
            return len(v)
    return None


def _layout(pspec, terms, d, family, start):
    """Coefficient names, smooth slices and penalties for one block."""
    pname = family.param_names[d]
    names = []
    if pspec.intercept:
        names.append(f"{pname}:(intercept)")
    names += [f"{pname}:{c}" for c in pspec.linear]
    ridge_start = start + len(names)
    names += [f"{pname}:ridge({c})" for c in pspec.ridge]
    pens = []
    if pspec.ridge:
        k = len(pspec.ridge)
        pens.append(
            Penalty(
                name=f"{pname}:ridge",
                param=d,
                start=ridge_start,
                stop=ridge_start + k,
                S=np.eye(k),
                rank=k,
            )
        )
    slices = []
    for t in terms:
        s0 = start + len(names)
        label = f"{pname}:s({t.spec.predictor})"
        names += [f"{label}.{i}" for i in range(t.n_coef)]
        sl = slice(s0, s0 + t.n_coef)
        slices.append(sl)
        pens.append(
            Penalty(name=label, param=d, start=sl.start, stop=sl.stop, S=t.S, rank=t.penalty_rank)
        )
    return names, slices, pens


def assemble(spec, data, y=None):
    """Build the feature blocks and penalty structure for ``spec`` on ``data``.

    The response is taken from ``y`` if given, else from the column named by
    ``spec.response``.
    """
    family = spec.family
    if y is None:
        y = get_column(data, spec.response)
    y = family.check_y(np.asarray(y, dtype=float).ravel())
    blocks, penalties = [], []
    start = 0
    n = None
    for d, pspec in enumerate(spec.params):
        parts = []
        if pspec.intercept:
            parts.append(None)
        for col in pspec.linear:
            parts.append(get_column(data, col)[:, None])
        for col in pspec.ridge:
            parts.append(get_column(data, col)[:, None])
        terms = []
        for bs in pspec.smooths:
            term = build_term(get_column(data, bs.predictor), bs)
            terms.append(term)
            parts.append(term.B)
        nb = _infer_n(parts, data, None)
        if nb is None:
            nb = y.size
        if n is None:
            n = nb
        elif nb != n:
            raise ValueError("columns have inconsistent lengths")
        parts = [np.ones((n, 1)) if p is None else p for p in parts]
        X = np.hstack(parts) if parts else np.zeros((n, 0))
        names, slices, pens = _layout(pspec, terms, d, family, start)
        stop = start + X.shape[1]
        offset = None if pspec.offset is None else get_column(data, pspec.offset)
        blocks.append(
            ParamBlock(
                spec=pspec,
                X=X,
                start=start,
                stop=stop,
                names=names,
                smooth_terms=terms,
                smooth_slices=slices,
                offset=offset,
            )
        )
        penalties.extend(pens)
        start = stop
    if n is None:
        n = y.size
    if y.size != n:
        raise ValueError(f"response has {y.size} rows, features have {n}")
    return ModelDesign(
        family=family, spec=spec, blocks=blocks, penalties=penalties, n=n, y=y
    )


def _assemble_blocks(design, W):
    """sum_i X_i' W_i X_i for per-observation (D x D) weights ``W``."""
    p = design.p
    out = np.zeros((p, p))
    D = len(design.blocks)
    for a in range(D):
        ba = design.blocks[a]
        for b in range(a, D):
            bb = design.blocks[b]
            blk = (ba.X * W[:, a, b][:, None]).T @ bb.X
            if a == b:
                # BLAS does not guarantee a bitwise symmetric product
                blk = 0.5 * (blk + blk.T)
            out[ba.slice, bb.slice] = blk
            if a != b:
                out[bb.slice, ba.slice] = blk.T
    return out


def accumulate(design, family, beta, order=2, y=None):
    """Log-likelihood, score and negative Hessian in the coefficients.

    Returns ``(loglik, U, H)``; with ``order=0`` only the log-likelihood is
    computed and ``U``/``H`` are ``None``.
    """
    y = design.y if y is None else y
    theta = design.linear_predictors(beta)
    ll, g, nh, _ = family.derivatives(y, theta, order=min(order, 2))
    total = float(np.sum(ll))
    if order < 1:
        return total, None, None
    U = np.concatenate([b.X.T @ g[:, d] for d, b in enumerate(design.blocks)])
    if order < 2:
        return total, U, None
    H = _assemble_blocks(design, nh)
    return total, U, H


def direction_predictors(design, v):
    """Change in the linear predictors along coefficient direction ``v``."""
    return np.column_stack([b.X @ v[b.slice] for b in design.blocks])


def hessian_lambda_derivative(design, family, beta, v, third=None, y=None):
    """Derivative of the negative Hessian along ``v`` in coefficient space.

    With ``v`` the derivative of the penalized estimate with respect to a
    smoothing parameter this is the sensitivity of ``H`` to that parameter.
    """
    if third is None:
        y = design.y if y is None else y
        theta = design.linear_predictors(beta)
        third = family.derivatives(y, theta, order=3)[3]
    dtheta = direction_predictors(design, v)
    # third derivative of the negative log-likelihood contracted with dtheta
    W = -np.einsum("iabc,ic->iab", third, dtheta)
    return _assemble_blocks(design, W)

"""Versioned JSON archives of fitted models.

Floats are written with ``repr`` precision by the json module, so a loaded
archive reproduces predictions bit for bit.
"""

import json

import numpy as np

from .design import ModelDesign
from .em import FitResult
from .families import get_family
from .solver import PenalizedFit

FORMAT = "emgam-fit"
VERSION = 1


class ArchiveError(ValueError):
    pass


def result_to_dict(result, config=None, fingerprint=None):
    fit = result.fit
    return {
        "format": FORMAT,
        "version": VERSION,
        "family": result.family.to_dict(),
        "response": result.design.spec.response,
        "design": result.design.to_dict(),
        "coef_names": result.design.coef_names,
        "beta": result.beta.tolist(),
        "lam": result.lam.tolist(),
        "penalties": [p.name for p in result.design.penalties],
        "posterior_cov": result.posterior_cov.tolist(),
        "kept": fit.kept.tolist(),
        "dropped": fit.dropped.tolist(),
        "loglik_pen": fit.loglik_pen,
        "loglik": fit.loglik,
        "converged": bool(result.converged),
        "n_outer": result.n_outer,
        "edf": result.edf.tolist(),
        "edf_total": result.edf_total,
        "config": config,
        "config_fingerprint": fingerprint,
    }


def save(result, path, config=None, fingerprint=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result_to_dict(result, config, fingerprint), fh, indent=1)
        fh.write("\n")


def result_from_dict(d):
    if d.get("format") != FORMAT:
        raise ArchiveError("not a fit archive")
    if d.get("version") != VERSION:
        raise ArchiveError(
            f"archive version {d.get('version')} is not supported (expected {VERSION})"
        )
    family = get_family(d["family"])
    design = ModelDesign.from_dict(d["design"], family)
    design.spec = type(design.spec)(
        family=family, params=design.spec.params, response=d["response"]
    )
    beta = np.asarray(d["beta"], dtype=float)
    if beta.size != design.p:
        raise ArchiveError("coefficient count does not match the stored design")
    lam = np.asarray(d["lam"], dtype=float)
    fit = PenalizedFit(
        beta=beta,
        loglik_pen=d["loglik_pen"],
        loglik=d["loglik"],
        H_P=None,
        U_P=None,
        lam=lam,
        kept=np.asarray(d["kept"], dtype=int),
        dropped=np.asarray(d["dropped"], dtype=int),
        rank=len(d["kept"]),
        iterations=0,
        halvings_used=0,
        converged=d["converged"],
    )
    return FitResult(
        beta=beta,
        lam=lam,
        posterior_cov=np.asarray(d["posterior_cov"], dtype=float).reshape(design.p, design.p),
        design=design,
        family=family,
        fit=fit,
        trajectory=[],
        converged=d["converged"],
        n_outer=d["n_outer"],
        edf=np.asarray(d["edf"], dtype=float),
        edf_total=d["edf_total"],
    )


def load(path):
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArchiveError(f"{path}: malformed archive ({exc})") from None
    res = result_from_dict(d)
    return res, d

"""Command-line interface.

Subcommands::

    emgam fit CONFIG DATA --out ARCHIVE [--fitted CSV]
    emgam predict ARCHIVE DATA [--out CSV] [--level L] [--quantiles P,P,...]
    emgam sample ARCHIVE DATA --replicates R [--out CSV]
    emgam simulate --model NAME --n N --R R [--out CSV] [--timing]

Every numeric flag may also be set through an environment variable with
the ``EMGAM_`` prefix (``EMGAM_SEED``, ``EMGAM_THREADS``, ``EMGAM_TOL``,
``EMGAM_MAX_OUTER``, ``EMGAM_LEVEL``, ``EMGAM_QUANTILES``).  Flags win over
the environment, which wins over the config file.

Exit status: 0 on success, 1 on input errors, 2 when the fit does not
converge (the best iterate is still archived when one exists).
"""

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np
import yaml

from . import archive
from .config import ConfigError, fingerprint, parse_config
from .design import assemble
from .em import EmSettings, em_fit
from .exceptions import EmGamError, NonConvergenceError
from .inference import predict_parameters, quantile_intervals, simulate_from_fit
from .simulate import StudyConfig, run_study
from .tabular import CSVFormatError, read_csv, write_csv

logger = logging.getLogger("emgam")

ENV_PREFIX = "EMGAM_"
EXIT_OK, EXIT_INPUT, EXIT_NONCONV = 0, 1, 2


class InputError(Exception):
    pass


def _env(name, cast):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise InputError(f"environment variable {ENV_PREFIX}{name}={raw!r} is invalid") from None


def _pick(flag, env_name, cast, fallback):
    if flag is not None:
        return flag
    env = _env(env_name, cast)
    return fallback if env is None else env


def _float_list(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def _resolve_seed(seed, out):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy)
        print(f"seed: {seed} (generated)", file=out)
    return seed


def _summary(result, seed, dropped_names):
    lines = [
        f"family: {result.family.name}",
        f"converged: {str(result.converged).lower()}",
        f"outer iterations: {result.n_outer}",
        f"penalized log-likelihood: {float(result.fit.loglik_pen)!r}",
        f"log-likelihood: {float(result.fit.loglik)!r}",
        f"effective degrees of freedom: {result.edf_total:.4f}",
        "smoothing parameters:",
    ]
    for pen, lam, edf in zip(result.design.penalties, result.lam, result.edf):
        lines.append(f"  {pen.name}: lambda={float(lam)!r} edf={edf:.4f}")
    lines.append(
        "dropped coefficients: " + (", ".join(dropped_names) if dropped_names else "none")
    )
    if seed is not None:
        lines.append(f"seed: {seed}")
    return "\n".join(lines) + "\n"


def _fitted_columns(result, level=0.95):
    pred = predict_parameters(result, None, level)
    return {name: pred.theta[:, d] for d, name in enumerate(pred.names)}


def cmd_fit(args, out=None):
    out = out or sys.stdout
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"cannot read config: {exc}") from None
    try:
        spec, settings, seed, threads = parse_config(raw)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    tol = _pick(args.tol, "TOL", float, settings.tol)
    max_outer = _pick(args.max_outer, "MAX_OUTER", int, settings.max_outer)
    threads = _pick(args.threads, "THREADS", int, threads)
    seed = _pick(args.seed, "SEED", int, seed)
    settings = dataclasses.replace(settings, tol=tol, max_outer=max_outer, threads=threads)

    data = _read_data(args.data)
    try:
        design = assemble(spec, data)
    except KeyError as exc:
        raise InputError(f"{args.data}: {exc.args[0]}") from None
    except (ValueError, EmGamError) as exc:
        raise InputError(f"{args.data}: {exc}") from None

    code = EXIT_OK
    try:
        result = em_fit(design, settings=settings)
    except NonConvergenceError as exc:
        code = EXIT_NONCONV
        print(f"error: fit did not converge: {exc}", file=sys.stderr)
        cause = exc.__cause__
        while cause is not None:
            print(f"  caused by: {type(cause).__name__}: {cause}", file=sys.stderr)
            cause = cause.__cause__
        for it in (exc.trajectory or [])[-5:]:
            print(
                f"  outer {it.outer_index}: l_P={it.loglik_pen!r} lambda={it.lam.tolist()}",
                file=sys.stderr,
            )
        result = exc.best
        if result is None:
            return code

    names = [result.design.coef_names[i] for i in result.fit.dropped]
    archive.save(result, args.out, config=raw, fingerprint=fingerprint(raw))
    text = _summary(result, seed, names)
    out.write(text)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    if args.fitted:
        write_csv(args.fitted, _fitted_columns(result))
    return code


def _read_data(path):
    try:
        return read_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read data: {exc}") from None
    except CSVFormatError as exc:
        raise InputError(str(exc)) from None


def _load_archive(path, config=None):
    try:
        result, raw = archive.load(path)
    except OSError as exc:
        raise InputError(f"cannot read archive: {exc}") from None
    except (archive.ArchiveError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if config is not None:
        try:
            with open(config, encoding="utf-8") as fh:
                cfg = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise InputError(f"cannot read config: {exc}") from None
        if fingerprint(cfg) != raw.get("config_fingerprint"):
            raise InputError("config does not match the one the archive was fitted with")
    return result


def cmd_predict(args, out=None):
    out = out or sys.stdout
    result = _load_archive(args.archive, args.config)
    data = _read_data(args.data)
    level = _pick(args.level, "LEVEL", float, 0.95)
    quantiles = _pick(args.quantiles, "QUANTILES", _float_list, None)
    try:
        pred = predict_parameters(result, data, level)
    except KeyError as exc:
        raise InputError(f"{args.data}: {exc.args[0]}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cols = pred.columns()
    if quantiles:
        if result.family.name != "gev":
            raise InputError("--quantiles requires a gev archive")
        seed = _resolve_seed(_pick(args.seed, "SEED", int, None), sys.stderr)
        try:
            est, lo, hi = quantile_intervals(
                result, quantiles, data, level, args.draws, np.random.default_rng(seed)
            )
        except ValueError as exc:
            raise InputError(str(exc)) from None
        for k, p in enumerate(quantiles):
            cols[f"q{p:g}"] = est[:, k]
            cols[f"q{p:g}_lower"] = lo[:, k]
            cols[f"q{p:g}_upper"] = hi[:, k]
    extrap = cols.pop("extrapolated")
    cols["extrapolated"] = extrap
    write_csv(args.out if args.out else out, cols)
    return EXIT_OK


def cmd_sample(args, out=None):
    out = out or sys.stdout
    result = _load_archive(args.archive)
    data = _read_data(args.data)
    seed = _resolve_seed(_pick(args.seed, "SEED", int, None), sys.stderr)
    try:
        draws = simulate_from_fit(result, np.random.default_rng(seed), args.replicates, data)
    except KeyError as exc:
        raise InputError(f"{args.data}: {exc.args[0]}") from None
    cols = {"row": np.arange(draws.shape[1])}
    for r in range(draws.shape[0]):
        cols[f"rep{r}"] = draws[r]
    write_csv(args.out if args.out else out, cols)
    return EXIT_OK


def cmd_simulate(args, out=None):
    out = out or sys.stdout
    seed = _resolve_seed(_pick(args.seed, "SEED", int, None), sys.stderr)
    threads = _pick(args.threads, "THREADS", int, 1)
    kw = {}
    tol = _pick(args.tol, "TOL", float, None)
    max_outer = _pick(args.max_outer, "MAX_OUTER", int, None)
    if tol is not None:
        kw["tol"] = tol
    if max_outer is not None:
        kw["max_outer"] = max_outer
    try:
        config = StudyConfig(
            model=args.model, n=args.n, R=args.R, seed=seed, k=args.k,
            threads=threads, settings=EmSettings(**kw),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    report = run_study(config)
    text = report.to_csv(timing=args.timing)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    s = report.summary()
    print(
        f"{args.model}: {s['converged']} converged, {s['failed']} failed",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="emgam",
        description="Multi-parameter GAMs with automatic smoothing by approximate EM.",
    )
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model from a config and a CSV")
    f.add_argument("config")
    f.add_argument("data")
    f.add_argument("--out", required=True, help="archive path (JSON)")
    f.add_argument("--summary", help="also write the summary to this file")
    f.add_argument("--fitted", help="write in-sample linear predictors to this CSV")
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=int)
    f.add_argument("--tol", type=float)
    f.add_argument("--max-outer", type=int, dest="max_outer")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict parameters from an archive")
    pr.add_argument("archive")
    pr.add_argument("data")
    pr.add_argument("--out")
    pr.add_argument("--config", help="refuse to predict if the archive used another config")
    pr.add_argument("--level", type=float)
    pr.add_argument("--quantiles", type=_float_list)
    pr.add_argument("--draws", type=int, default=1000)
    pr.add_argument("--seed", type=int)
    pr.set_defaults(func=cmd_predict)

    sa = sub.add_parser("sample", help="simulate responses from a fitted model")
    sa.add_argument("archive")
    sa.add_argument("data")
    sa.add_argument("--replicates", type=int, default=1)
    sa.add_argument("--out")
    sa.add_argument("--seed", type=int)
    sa.set_defaults(func=cmd_sample)

    si = sub.add_parser("simulate", help="run the synthetic benchmark study")
    si.add_argument("--model", required=True)
    si.add_argument("--n", type=int, default=25000)
    si.add_argument("--R", type=int, default=100)
    si.add_argument("--k", type=int, default=10)
    si.add_argument("--out")
    si.add_argument("--seed", type=int)
    si.add_argument("--threads", type=int)
    si.add_argument("--tol", type=float)
    si.add_argument("--max-outer", type=int, dest="max_outer")
    si.add_argument("--timing", action="store_true",
                    help="fill the seconds column; the report is then no longer reproducible")
    si.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        # output closed early (e.g. piped into head)
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

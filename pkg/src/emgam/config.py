"""Model configuration files.

A configuration is a YAML mapping::

    family: gev                 # or {name: gaussian_fixed, sd: 2.0}
    response: y
    params:                     # one entry per distribution parameter
      mu:
        smooths:
          - {kind: cyclic-cubic, predictor: month, k: 12, period: [0, 12]}
          - {kind: thin-plate, predictor: year, k: 10}
        linear: []
      tau:
        smooths:
          - {kind: cyclic-cubic, predictor: month, k: 12, period: [0, 12]}
      xi:
        smooths:
          - {kind: cyclic-cubic, predictor: month, k: 12, period: [0, 12]}
    settings: {tol: 1.0e-4, max_outer: 5000, lam0: 1.0, pll_tol: 1.0e-8}
    seed: 1
    threads: 1

Parameter keys must be the family's parameter names (``gaussian``: mu,
sigma; ``gev``: mu, tau, xi; ...).  Unknown keys anywhere are rejected.
"""

import hashlib
import json

import yaml

from .basis import BasisSpec
from .design import ModelSpec, ParameterSpec
from .em import EmSettings
from .families import get_family
from .solver import NewtonSettings

TOP_KEYS = {"family", "response", "params", "settings", "seed", "threads"}
PARAM_KEYS = {"smooths", "linear", "ridge", "intercept", "offset"}
SMOOTH_KEYS = {"kind", "predictor", "k", "period", "knot_rule"}
SETTINGS_KEYS = {"tol", "max_outer", "lam0", "pll_tol", "freeze", "newton"}
NEWTON_KEYS = {"grad_tol", "max_iter", "max_halvings", "eig_floor", "init_rate",
               "decrement_tol"}


class ConfigError(ValueError):
    pass


def _reject_unknown(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, extra))}")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw or {})


def parse_config(raw):
    """Validate a configuration mapping.

    Returns ``(model_spec, em_settings, seed, threads)``.
    """
    _reject_unknown(raw, TOP_KEYS, "config")
    if "family" not in raw:
        raise ConfigError("config: 'family' is required")
    try:
        family = get_family(raw["family"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"family: {exc}") from None
    params = raw.get("params") or {}
    _reject_unknown(params, set(family.param_names), "params")
    specs = []
    for name in family.param_names:
        entry = params.get(name) or {}
        _reject_unknown(entry, PARAM_KEYS, f"params.{name}")
        smooths = []
        for i, sm in enumerate(entry.get("smooths") or []):
            where = f"params.{name}.smooths[{i}]"
            _reject_unknown(sm, SMOOTH_KEYS, where)
            if "predictor" not in sm:
                raise ConfigError(f"{where}: 'predictor' is required")
            try:
                smooths.append(
                    BasisSpec(
                        kind=sm.get("kind", "cubic-regression"),
                        k=sm.get("k", 10),
                        predictor=str(sm["predictor"]),
                        knot_rule=sm.get("knot_rule", "even-in-range"),
                        period=tuple(sm["period"]) if sm.get("period") else None,
                    )
                )
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: {exc}") from None
        specs.append(
            ParameterSpec(
                smooths=smooths,
                linear=tuple(map(str, entry.get("linear") or ())),
                ridge=tuple(map(str, entry.get("ridge") or ())),
                intercept=bool(entry.get("intercept", True)),
                offset=entry.get("offset"),
            )
        )
    spec = ModelSpec(family=family, params=specs, response=str(raw.get("response", "y")))

    st = raw.get("settings") or {}
    _reject_unknown(st, SETTINGS_KEYS, "settings")
    nt = st.get("newton") or {}
    _reject_unknown(nt, NEWTON_KEYS, "settings.newton")
    try:
        newton = NewtonSettings(**{k: _num(v) for k, v in nt.items()})
        kwargs = {k: _num(v) for k, v in st.items() if k != "newton"}
        settings = EmSettings(newton=newton, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"settings: {exc}") from None
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads must be a positive integer")
    return spec, settings, seed, threads


def _num(v):
    # YAML 1.1 reads "1e-4" (no decimal point) as a string
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def fingerprint(raw):
    """Stable hash of a configuration mapping."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()

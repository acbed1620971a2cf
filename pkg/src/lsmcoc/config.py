"""TOML run configuration: parsing, defaults and object construction.

Layout::

    [model]       type = "ar-garch" | "ar-garch-sum" | "life-small" | "life-large" | "custom"
                  plus model parameters
    [run]         M, n, T, alpha, eta, seed, threads
    [validation]  M, n, seed, bins, band
    [basis]       strikes, select_strikes, strike_count, min_itm_prob
    [output]      directory
    [oracle]      method, n_outer, n_inner, seed, batches, level, sigma

Every omitted key takes the default below.
"""

from __future__ import annotations

import copy
import importlib
import os
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .basis import DEFAULT_STRIKES, ArGarchBasis, ArGarchSumBasis, build_basis_life
from .engine import RunConfig
from .models import (
    FEMALE_M90,
    MALE_M90,
    ArGarchModel,
    ArGarchParams,
    ArGarchSumModel,
    LifeModel,
    LifeModelParams,
)
from .risk import CocParams
from .validation import ValidationConfig

MODEL_TYPES = ("ar-garch", "ar-garch-sum", "life-small", "life-large", "custom")
THREADS_ENV = "LSMCOC_THREADS"

_AR_KEYS = {"alpha0": 1.0, "alpha1": 1.0, "alpha2": 0.1, "alpha3": 0.1, "alpha4": 0.1, "l0": 0.0, "sigma1": 1.0}
_LIFE_KEYS = {
    "mu_y": 0.03,
    "mu_f": 0.03,
    "sigma_y": 0.1,
    "sigma_f": 0.1,
    "rho": 0.4,
    "y0": 100.0,
    "f0": 100.0,
    "d_star": 100.0,
    "s_star": 110.0,
    "c": 1.0,
}
_LIFE_AGES = {"life-small": list(range(50, 81, 10)), "life-large": list(range(40, 86, 5))}

SECTION_DEFAULTS = {
    "run": {"T": 6, "alpha": 0.995, "eta": 0.06, "seed": 1, "threads": 0},
    "validation": {"M": 10_000, "n": 100_000, "bins": 20, "band": [0.025, 0.975]},
    "basis": {"strikes": list(DEFAULT_STRIKES), "select_strikes": False, "strike_count": 4, "min_itm_prob": 0.01},
    "output": {"directory": "lsmcoc-out"},
    "oracle": {
        "method": "nested",
        "n_outer": 20_000,
        "n_inner": 10_000,
        "seed": 7,
        "batches": 20,
        "level": 0.0,
        "sigma": 1.0,
    },
}


class ConfigError(ValueError):
    pass


def _locate(text: str, section: str, key: str | None) -> str:
    """`` (line N)`` for a key (or section header) in the raw TOML text."""
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return f" (line {lineno})"
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return f" (line {lineno})"
    return ""


def _number(value, kind, where):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _check_section(raw, section, spec, text):
    given = raw.get(section, {})
    if not isinstance(given, dict):
        raise ConfigError(f"[{section}] must be a table{_locate(text, section, None)}")
    unknown = set(given) - set(spec)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key [{section}].{key}{_locate(text, section, key)}")
    out = {}
    for key, default in spec.items():
        if key in given:
            where = f"[{section}].{key}{_locate(text, section, key)}"
            kind = type(default) if default is not None else None
            if isinstance(default, list):
                if not isinstance(given[key], list):
                    raise ConfigError(f"{where}: expected a list")
                out[key] = list(given[key])
            else:
                out[key] = _number(given[key], kind, where)
        else:
            out[key] = copy.deepcopy(default)
    return out


def _model_spec(mtype: str) -> dict:
    if mtype == "ar-garch":
        return dict(_AR_KEYS)
    if mtype == "ar-garch-sum":
        return {**_AR_KEYS, "components": 10}
    if mtype in _LIFE_AGES:
        return {**_LIFE_KEYS, "cohort_size": 1000, "cohorts": None, "sex": "male"}
    return {"factory": "", "params": None}


def load_config(path) -> dict:
    """Parse ``path`` and return the fully resolved configuration dictionary."""
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def parse_config(text: str) -> dict:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    unknown = set(raw) - {"model", *SECTION_DEFAULTS}
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown section [{name}]{_locate(text, name, None)}")
    if "model" not in raw:
        raise ConfigError("missing [model] section")
    mtype = raw["model"].get("type")
    if mtype not in MODEL_TYPES:
        raise ConfigError(
            f"[model].type must be one of {', '.join(MODEL_TYPES)}, got {mtype!r}{_locate(text, 'model', 'type')}"
        )
    spec = {"type": mtype, **_model_spec(mtype)}
    cfg = {"model": _check_section(raw, "model", spec, text)}
    life = mtype.startswith("life")
    run_spec = {"M": 50_000 if life else 10_000, "n": 100_000, **SECTION_DEFAULTS["run"]}
    cfg["run"] = _check_section(raw, "run", run_spec, text)
    val_spec = {**SECTION_DEFAULTS["validation"], "seed": cfg["run"]["seed"] + 1}
    cfg["validation"] = _check_section(raw, "validation", val_spec, text)
    for name in ("basis", "output", "oracle"):
        cfg[name] = _check_section(raw, name, SECTION_DEFAULTS[name], text)

    m = cfg["model"]
    if life:
        if m["cohorts"] is None:
            m["cohorts"] = [[m["cohort_size"], a] for a in _LIFE_AGES[mtype]]
        if m["sex"] not in ("male", "female"):
            raise ConfigError(f"[model].sex must be 'male' or 'female'{_locate(text, 'model', 'sex')}")
    if mtype == "custom" and not m["factory"]:
        raise ConfigError("[model].factory ('module:function') is required for custom models")
    if cfg["run"]["T"] < 1:
        raise ConfigError(f"[run].T must be >= 1{_locate(text, 'run', 'T')}")
    try:
        run_config(cfg)
        validation_config(cfg)
        build_model(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def coc_params(cfg) -> CocParams:
    return CocParams(cfg["run"]["alpha"], cfg["run"]["eta"])


def resolve_threads(cfg, flag: int | None = None) -> int:
    """CLI flag, then config (nonzero), then environment, then auto (0)."""
    if flag is not None:
        return flag
    if cfg["run"]["threads"]:
        return cfg["run"]["threads"]
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from exc
    return 0


def run_config(cfg, threads: int = 0) -> RunConfig:
    r = cfg["run"]
    return RunConfig(r["M"], r["n"], coc_params(cfg), r["seed"], threads)


def validation_config(cfg, threads: int = 0) -> ValidationConfig:
    v = cfg["validation"]
    return ValidationConfig(v["M"], v["n"], v["seed"], tuple(v["band"]), v["bins"], threads)


def build_model(cfg):
    m = cfg["model"]
    T = cfg["run"]["T"]
    mtype = m["type"]
    if mtype == "ar-garch":
        return ArGarchModel(ArGarchParams(**{k: m[k] for k in _AR_KEYS}), T)
    if mtype == "ar-garch-sum":
        p = ArGarchParams(**{k: m[k] for k in _AR_KEYS})
        return ArGarchSumModel([p] * m["components"], horizon=T)
    if mtype.startswith("life"):
        return LifeModel(life_params(cfg), T)
    return _custom(cfg)[0]


def life_params(cfg) -> LifeModelParams:
    m = cfg["model"]
    law = FEMALE_M90 if m["sex"] == "female" else MALE_M90
    return LifeModelParams(
        **{k: m[k] for k in _LIFE_KEYS},
        cohorts=tuple((int(n), int(a)) for n, a in m["cohorts"]),
        mortality=law,
    )


def _custom(cfg):
    module, _, func = cfg["model"]["factory"].partition(":")
    try:
        factory = getattr(importlib.import_module(module), func)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load custom factory {cfg['model']['factory']!r}: {exc}") from exc
    return factory(cfg["run"]["T"], **(cfg["model"]["params"] or {}))


def build_bases(cfg, model, strikes=None) -> dict:
    """Regression bases for ``t = 1..T-1``.

    ``strikes`` overrides the configured life-model strikes (used after a
    strike-selection pilot).
    """
    T = model.horizon
    mtype = cfg["model"]["type"]
    if mtype == "ar-garch":
        return {t: ArGarchBasis(t) for t in range(1, T)}
    if mtype == "ar-garch-sum":
        return {t: ArGarchSumBasis(t, model.k) for t in range(1, T)}
    if mtype.startswith("life"):
        b = cfg["basis"]
        ks = b["strikes"] if strikes is None else strikes
        return {t: build_basis_life(t, model.params, T, ks, b["min_itm_prob"]) for t in range(1, T)}
    return _custom(cfg)[1]

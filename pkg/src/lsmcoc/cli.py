"""Command-line front end: ``lsmcoc value | validate | oracle``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import RankDeficiencyError
from .config import (
    ConfigError,
    build_bases,
    build_model,
    coc_params,
    load_config,
    resolve_threads,
    run_config,
    validation_config,
)
from .engine import CoefficientTable, lsm_backward, pilot_strike_selection
from .oracle import OracleUnsupportedError, nested_value_T2, terminal_estimate
from .models import ArGarchModel
from .risk import NonFiniteSampleError
from .validation import SeedCollisionError, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ORACLE = 4

log = logging.getLogger("lsmcoc")


def basis_hash(bases) -> str:
    h = hashlib.sha256()
    for t in sorted(bases):
        h.update(f"{t}:{'|'.join(bases[t].labels)}\n".encode())
    return h.hexdigest()


def _manifest_config(cfg) -> dict:
    """The resolved configuration minus settings that must not affect artifacts."""
    out = json.loads(json.dumps(cfg))
    out["run"].pop("threads", None)
    out.pop("output", None)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _apply_overrides(cfg, args, seed_section, default_dir=None):
    if getattr(args, "seed", None) is not None:
        cfg[seed_section]["seed"] = args.seed
    if getattr(args, "bins", None) is not None:
        cfg["validation"]["bins"] = args.bins
    out = Path(args.output_dir or default_dir or cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_value(args) -> int:
    cfg = load_config(args.config)
    out = _apply_overrides(cfg, args, "run")
    threads = resolve_threads(cfg, args.threads)
    model = build_model(cfg)
    rc = run_config(cfg, threads)
    strikes = None
    if cfg["model"]["type"].startswith("life") and cfg["basis"]["select_strikes"]:
        pilot = build_bases(cfg, model, strikes=[])
        strikes = pilot_strike_selection(model, pilot, rc, cfg["basis"]["strikes"], cfg["basis"]["strike_count"])
        cfg["basis"]["strikes"] = strikes
        cfg["basis"]["select_strikes"] = False
        print(f"selected strikes: {strikes}")
    bases = build_bases(cfg, model, strikes)
    table = lsm_backward(model, bases, rc)
    table.to_csv(out / "coefficients.csv")
    manifest = {
        "version": __version__,
        "command": "value",
        "config": _manifest_config(cfg),
        "basis_hash": basis_hash(bases),
        "basis_sizes": {str(t): len(b) for t, b in sorted(bases.items())},
        "time_zero": {"r0": table.r0, "e0": table.e0, "v0": table.v0, "v0_se": table.v0_se},
    }
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "timings.json", {"threads": threads, "seconds": {str(t): s for t, s in sorted(table.timings.items())}})
    for t in sorted(table.timings, reverse=True):
        print(f"t={t}: {table.timings[t]:.2f}s")
    print(f"V0 = {table.v0!r} (se {table.v0_se:.3g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    coef_path = Path(args.coefficients)
    manifest_path = coef_path.with_name("manifest.json")
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json next to {coef_path}")
    manifest = json.loads(manifest_path.read_text())
    trained = manifest["config"]
    if trained["model"] != cfg["model"] or trained["run"]["T"] != cfg["run"]["T"]:
        raise ConfigError("model configuration differs from the one the coefficients were fitted with")
    # the fitted strikes (possibly selected by a pilot) define the basis
    cfg["basis"] = dict(trained["basis"])
    cfg["run"] = {**trained["run"], "threads": cfg["run"]["threads"]}
    # reports land next to the coefficients unless redirected
    out = _apply_overrides(cfg, args, "validation", coef_path.parent)
    threads = resolve_threads(cfg, args.threads)
    model = build_model(cfg)
    bases = build_bases(cfg, model)
    if basis_hash(bases) != manifest["basis_hash"]:
        raise ConfigError("basis does not match the manifest the coefficients were written with")
    table = CoefficientTable.from_csv(coef_path, model.horizon, coc_params(cfg), cfg["run"]["seed"], manifest["time_zero"])
    for t, b in bases.items():
        if table.labels.get(t) != tuple(b.labels):
            raise ConfigError(f"coefficient labels at t={t} do not match the configured basis")
    report = validate(model, bases, table, validation_config(cfg, threads))
    report.to_csv(out / "validation_report.csv")
    report.histograms_to_csv(out / "histograms.csv")
    _write_json(
        out / "validation_manifest.json",
        {"version": __version__, "command": "validate", "config": _manifest_config(cfg), "basis_hash": manifest["basis_hash"]},
    )
    for t, tv in sorted(report.per_time.items()):
        print(
            f"t={t}: NRMSE% V {100 * tv.nrmse['V']:.4f} R {100 * tv.nrmse['R']:.4f} E {100 * tv.nrmse['E']:.4f}"
            f"  1-ANDP% ({100 * tv.default_band[0]:.3f}, {100 * tv.default_band[1]:.3f})"
            f"  AROC ({tv.aroc_band[0]:.4f}, {tv.aroc_band[1]:.4f})"
        )
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    out = _apply_overrides(cfg, args, "oracle")
    o = cfg["oracle"]
    model = build_model(cfg)
    coc = coc_params(cfg)
    if o["method"] == "nested":
        est = nested_value_T2(model, o["n_outer"], o["n_inner"], coc, o["seed"], o["batches"])
    elif o["method"] == "terminal":
        if not isinstance(model, ArGarchModel):
            raise OracleUnsupportedError("closed-form terminal value exists only for the single AR-GARCH model")
        est = terminal_estimate(model.params, o["level"], o["sigma"], coc)
    else:
        raise ConfigError(f"[oracle].method must be 'nested' or 'terminal', got {o['method']!r}")
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "standard_error", "method"])
        w.writerow([repr(est.value), repr(est.standard_error), est.method])
    print(f"{est.method}: {est.value!r} (se {est.standard_error:.3g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsmcoc", description="LSM cost-of-capital valuation")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override the seed of this command")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
        p.add_argument("--output-dir", help="directory for written artifacts")
        p.add_argument("--bins", type=int, help="histogram bins")

    common(sub.add_parser("value", help="fit the LSM coefficient table"))
    p = sub.add_parser("validate", help="out-of-sample validation of a coefficient table")
    common(p)
    p.add_argument("--coefficients", required=True, help="coefficients.csv written by 'value'")
    common(sub.add_parser("oracle", help="brute-force or closed-form reference value"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    handler = {"value": cmd_value, "validate": cmd_validate, "oracle": cmd_oracle}[args.command]
    try:
        return handler(args)
    except (ConfigError, SeedCollisionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleUnsupportedError as exc:
        print(f"oracle unsupported: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (RankDeficiencyError, NonFiniteSampleError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

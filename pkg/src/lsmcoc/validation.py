"""Out-of-sample validation of a fitted coefficient table."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .basis import Basis
from .engine import INNER, OUTER, CoefficientTable, coc_from_sample, inner_sample, map_ordered, substream
from .models import MarkovModel, simulate_marginal
from .risk import quantile_rank


class SeedCollisionError(ValueError):
    pass


@dataclass(frozen=True)
class ValidationConfig:
    M: int
    n: int
    seed: int
    band: tuple[float, float] = (0.025, 0.975)
    bins: int = 20
    threads: int = 0

    def __post_init__(self):
        if self.M < 1 or self.n < 1:
            raise ValueError("validation sample sizes must be positive")
        lo, hi = self.band
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError("band must satisfy 0 < lo <= hi < 1")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")


def rmse(targets, predictions) -> float:
    z = np.asarray(targets, dtype=float)
    zh = np.asarray(predictions, dtype=float)
    if z.shape != zh.shape or z.size == 0:
        raise ValueError("targets and predictions need equal nonzero length")
    return float(np.sqrt(np.mean((z - zh) ** 2)))


def nrmse(targets, predictions) -> float:
    """RMSE divided by the root mean square of the targets."""
    z = np.asarray(targets, dtype=float)
    scale = math.sqrt(float(np.mean(z * z))) if z.size else 0.0
    if scale == 0.0:
        raise ZeroDivisionError("targets are all zero")
    return rmse(z, predictions) / scale


def andp(ys, predicted_r: float) -> float:
    """Empirical cdf of the inner sample at the predicted capital."""
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise ValueError("empty sample")
    return float(np.count_nonzero(ys <= predicted_r) / ys.size)


def aroc(e: float, predicted_e: float, eta: float) -> float:
    if predicted_e <= 0:
        raise ValueError(f"predicted shortfall {predicted_e!r} is not positive")
    return (1.0 + eta) * e / predicted_e


def histogram(samples, bins: int) -> list[tuple[float, int]]:
    """Equal-width bins over ``[min, max]`` as ``(lower_edge, count)`` pairs."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(samples, bins=bins)
    return [(float(e), int(c)) for e, c in zip(edges[:-1], counts)]


def _safe_nrmse(z, zh) -> float:
    try:
        return nrmse(z, zh)
    except ZeroDivisionError:
        return math.nan


def _band(x: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    s = np.sort(x)
    return float(s[quantile_rank(s.size, lo) - 1]), float(s[quantile_rank(s.size, hi) - 1])


@dataclass
class TimeValidation:
    t: int
    rmse: dict[str, float]
    nrmse: dict[str, float]
    andp: np.ndarray = field(repr=False)
    aroc: np.ndarray = field(repr=False)
    aroc_invalid: int
    andp_band: tuple[float, float]
    default_band: tuple[float, float]
    aroc_band: tuple[float, float]
    targets: dict[str, np.ndarray] = field(repr=False)
    predictions: dict[str, np.ndarray] = field(repr=False)

    @property
    def default_rate_mean(self) -> float:
        """Pooled mean of ``1 - ANDP``."""
        return float(1.0 - self.andp.mean())


@dataclass
class ValidationReport:
    per_time: dict[int, TimeValidation]
    config: ValidationConfig

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "stat", "valueR", "valueE", "valueV", "lo", "hi"])
            for t in sorted(self.per_time):
                tv = self.per_time[t]
                for stat, d in (("rmse", tv.rmse), ("nrmse", tv.nrmse)):
                    w.writerow([t, stat, repr(d["R"]), repr(d["E"]), repr(d["V"]), "", ""])
                for stat, (lo, hi) in (
                    ("andp", tv.andp_band),
                    ("one_minus_andp", tv.default_band),
                    ("aroc", tv.aroc_band),
                ):
                    w.writerow([t, stat, "", "", "", repr(lo), repr(hi)])
                w.writerow([t, "aroc_invalid", "", "", "", "", tv.aroc_invalid])

    def histograms_to_csv(self, path, bins: int | None = None) -> None:
        bins = bins or self.config.bins
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "series", "bin_lower_edge", "count"])
            for t in sorted(self.per_time):
                tv = self.per_time[t]
                for series, x in (("andp", tv.andp), ("aroc", tv.aroc)):
                    if x.size == 0:
                        continue
                    for edge, count in histogram(x, bins):
                        w.writerow([t, series, repr(edge), count])


def validate(
    model: MarkovModel,
    bases: Mapping[int, Basis],
    table: CoefficientTable,
    config: ValidationConfig,
) -> ValidationReport:
    """Recompute targets on fresh outer points and score the frozen regressions."""
    if config.seed == table.seed:
        raise SeedCollisionError(f"validation seed {config.seed} equals the training seed")
    coc = table.coc
    k = quantile_rank(config.n, coc.alpha)
    out = {}
    for t in range(1, model.horizon):
        basis = bases[t]
        if tuple(basis.labels) != tuple(table.labels[t]):
            raise ValueError(f"basis at t={t} does not match the coefficient table")
        states = simulate_marginal(model, t, config.M, substream(config.seed, OUTER, t))
        pred = {
            "R": basis.predict(table.beta_r[t], states),
            "E": basis.predict(table.beta_e[t], states),
            "V": basis.predict(table.beta_v[t], states),
        }
        basis_next = bases[t + 1] if t + 1 < model.horizon else None
        beta_next = table.value_beta(t + 1)
        pred_r = pred["R"]

        def row(i):
            rng = substream(config.seed, INNER, t, i)
            y = inner_sample(model, basis_next, beta_next, states[i], t, config.n, rng)
            r, e = coc_from_sample(y, k)
            return r, e, np.count_nonzero(y <= pred_r[i]) / config.n

        res = map_ordered(row, config.M, config.threads)
        targets = {"R": res[:, 0], "E": res[:, 1], "V": res[:, 0] - coc.discount * res[:, 1]}
        valid = pred["E"] > 0
        aroc_samples = (1.0 + coc.eta) * targets["E"][valid] / pred["E"][valid]
        andp_samples = res[:, 2]
        lo, hi = config.band
        out[t] = TimeValidation(
            t=t,
            rmse={z: rmse(targets[z], pred[z]) for z in "REV"},
            nrmse={z: _safe_nrmse(targets[z], pred[z]) for z in "REV"},
            andp=andp_samples,
            aroc=aroc_samples,
            aroc_invalid=int(config.M - np.count_nonzero(valid)),
            andp_band=_band(andp_samples, lo, hi),
            default_band=_band(1.0 - andp_samples, lo, hi),
            aroc_band=_band(aroc_samples, lo, hi) if aroc_samples.size else (math.nan, math.nan),
            targets=targets,
            predictions=pred,
        )
    return ValidationReport(out, config)

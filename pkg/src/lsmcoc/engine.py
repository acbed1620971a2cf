"""Backward least-squares Monte Carlo recursion for cost-of-capital values."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .basis import Basis, RankDeficiencyError, ols_fit
from .models import MarkovModel, simulate_marginal
from .risk import CocParams, NonFiniteSampleError, quantile_rank

logger = logging.getLogger(__name__)

# stream purposes, first element of every spawn key
OUTER = 1
INNER = 2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key)``; identical for identical inputs."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def resolve_threads(threads: int) -> int:
    return threads if threads > 0 else (os.cpu_count() or 1)


def map_ordered(func: Callable[[int], tuple], count: int, threads: int) -> np.ndarray:
    """Evaluate ``func(i)`` for ``i < count``; rows come back in index order."""
    threads = resolve_threads(threads)
    if threads == 1 or count < 2:
        rows = [func(i) for i in range(count)]
    else:
        chunk = max(1, count // (8 * threads))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(func, range(count), chunksize=chunk))
    return np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class RunConfig:
    M: int
    n: int
    coc: CocParams = CocParams()
    seed: int = 0
    threads: int = 0
    drop_dependent: bool = True

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be positive")
        if self.n < math.ceil(1.0 / (1.0 - self.coc.alpha)):
            raise ValueError(f"n={self.n} leaves no sample beyond the {self.coc.alpha} quantile")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(eq=False)
class CoefficientTable:
    """Per-time coefficients for ``R``, ``E`` and ``V`` plus the time-zero value."""

    horizon: int
    coc: CocParams
    seed: int
    labels: dict[int, tuple[str, ...]] = field(default_factory=dict)
    beta_r: dict[int, np.ndarray] = field(default_factory=dict)
    beta_e: dict[int, np.ndarray] = field(default_factory=dict)
    beta_v: dict[int, np.ndarray] = field(default_factory=dict)
    r0: float = math.nan
    e0: float = math.nan
    v0: float = math.nan
    v0_se: float = math.nan
    dropped: dict[int, tuple[str, ...]] = field(default_factory=dict)
    timings: dict[int, float] = field(default_factory=dict, compare=False)

    def value_beta(self, t: int) -> np.ndarray | None:
        """Coefficients of ``V_t``; ``None`` at the horizon where ``V_T = 0``."""
        return None if t >= self.horizon else self.beta_v[t]

    def set_coefficients(self, t, labels, beta_r, beta_e):
        self.labels[t] = tuple(labels)
        self.beta_r[t] = beta_r
        self.beta_e[t] = beta_e
        self.beta_v[t] = beta_r - self.coc.discount * beta_e

    def to_csv(self, path) -> None:
        """One ``labels`` row then ``R``, ``E``, ``V`` rows for each ``t``."""
        width = max((len(v) for v in self.labels.values()), default=1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "target"] + [f"b{j}" for j in range(width)])
            for t in sorted(self.labels):
                w.writerow([t, "labels", *self.labels[t]])
                for name, table in (("R", self.beta_r), ("E", self.beta_e), ("V", self.beta_v)):
                    w.writerow([t, name, *(repr(float(b)) for b in table[t])])

    @classmethod
    def from_csv(cls, path, horizon: int, coc: CocParams, seed: int, time_zero=None) -> "CoefficientTable":
        table = cls(horizon, coc, seed)
        rows: dict[int, dict[str, list[str]]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["t", "target"]:
                raise ValueError(f"{path}: not a coefficient table")
            for row in reader:
                t, target, *rest = row
                rows.setdefault(int(t), {})[target] = rest
        for t, entry in rows.items():
            missing = {"labels", "R", "E", "V"} - entry.keys()
            if missing:
                raise ValueError(f"{path}: t={t} lacks rows {sorted(missing)}")
            labels = tuple(entry["labels"])
            p = len(labels)
            table.labels[t] = labels
            table.beta_r[t] = np.array([float(x) for x in entry["R"][:p]])
            table.beta_e[t] = np.array([float(x) for x in entry["E"][:p]])
            table.beta_v[t] = np.array([float(x) for x in entry["V"][:p]])
        if time_zero:
            table.r0, table.e0, table.v0 = time_zero["r0"], time_zero["e0"], time_zero["v0"]
            table.v0_se = time_zero.get("v0_se", math.nan)
        return table


def inner_sample(
    model: MarkovModel,
    basis_next: Basis | None,
    beta_next: np.ndarray | None,
    state,
    t: int,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``g_{t+1}(S') + beta' Phi_{t+1}(S')`` over ``n`` successors ``S'`` of ``state``."""
    nxt = model.successors(state, t, n, rng)
    y = model.cashflow(t + 1, nxt)
    if beta_next is not None:
        y = y + basis_next.predict(beta_next, nxt)
    if not np.isfinite(y.sum()):
        raise NonFiniteSampleError(f"non-finite inner value at t={t} from state {np.asarray(state).tolist()}")
    return y


def coc_from_sample(y: np.ndarray, k: int) -> tuple[float, float]:
    """``(r, e)`` where ``r`` is the ``k``-th order statistic of ``y``."""
    r = float(np.partition(y, k - 1)[k - 1])
    return r, float(np.maximum(r - y, 0.0).mean())


def inner_targets(model, basis_next, beta_next, state, t, n, coc: CocParams, rng) -> tuple[float, float]:
    """Capital ``R`` and shortfall ``E`` at one outer state."""
    y = inner_sample(model, basis_next, beta_next, state, t, n, rng)
    return coc_from_sample(y, quantile_rank(n, coc.alpha))


def _targets(model, bases, table, states, t, config: RunConfig, seed: int) -> np.ndarray:
    basis_next = bases[t + 1] if t + 1 < model.horizon else None
    beta_next = table.value_beta(t + 1)
    k = quantile_rank(config.n, config.coc.alpha)

    def row(i):
        rng = substream(seed, INNER, t, i)
        y = inner_sample(model, basis_next, beta_next, states[i], t, config.n, rng)
        return coc_from_sample(y, k)

    return map_ordered(row, states.shape[0], config.threads)


def fit_targets(X, targets, labels, drop_dependent: bool = True):
    """OLS fits of each target column on ``X`` sharing one column set.

    With ``drop_dependent`` the columns reported by a rank-deficiency error
    get coefficient zero and the remaining ones are refitted; predictions are
    unchanged when the dropped columns are exact combinations of the others.
    """
    labels = list(labels)
    try:
        return [ols_fit(X, y, labels) for y in targets], ()
    except RankDeficiencyError as exc:
        if not drop_dependent or len(exc.columns) >= len(labels):
            raise
        dropped = tuple(exc.columns)
    keep = [j for j, name in enumerate(labels) if name not in dropped]
    logger.warning("dropping dependent basis column(s) %s", ", ".join(dropped))
    betas = []
    for y in targets:
        beta = np.zeros(len(labels))
        beta[keep] = ols_fit(X[:, keep], y, [labels[j] for j in keep])
        betas.append(beta)
    return betas, dropped


def lsm_backward(model: MarkovModel, bases: Mapping[int, Basis], config: RunConfig) -> CoefficientTable:
    """Fit ``R_t`` and ``E_t`` regressions backwards from ``t = T-1``.

    At ``t = 0`` the state is constant, so the regression is intercept-only:
    ``r0`` and ``e0`` are averages over ``M`` independent inner runs from
    ``S_0`` and ``v0_se`` is the standard error of their combination.
    """
    T = model.horizon
    table = CoefficientTable(T, config.coc, config.seed)
    for t in range(T - 1, 0, -1):
        if len(bases[t]) > config.M:
            raise ValueError(f"M={config.M} is smaller than the {len(bases[t])} basis functions at t={t}")
    for t in range(T - 1, -1, -1):
        start = time.perf_counter()
        if t == 0:
            states = model.initial_state()[None, :].repeat(config.M, axis=0)
        else:
            states = simulate_marginal(model, t, config.M, substream(config.seed, OUTER, t))
        re = _targets(model, bases, table, states, t, config, config.seed)
        if t == 0:
            v = re[:, 0] - config.coc.discount * re[:, 1]
            table.r0, table.e0 = float(re[:, 0].mean()), float(re[:, 1].mean())
            table.v0 = table.r0 - config.coc.discount * table.e0
            table.v0_se = float(v.std(ddof=1) / math.sqrt(config.M)) if config.M > 1 else math.nan
        else:
            basis = bases[t]
            (beta_r, beta_e), dropped = fit_targets(basis.evaluate(states), re.T, basis.labels, config.drop_dependent)
            table.set_coefficients(t, basis.labels, beta_r, beta_e)
            if dropped:
                table.dropped[t] = dropped
        table.timings[t] = time.perf_counter() - start
        logger.info("t=%d done in %.1fs", t, table.timings[t])
    return table


def value_at_zero(table: CoefficientTable) -> float:
    return table.v0


def pilot_strike_selection(model, bases_without_strikes: Mapping[int, Basis], config: RunConfig, candidates, count=None):
    """Pick strikes by residual R^2 at ``t = T-1`` using a strike-free pilot fit."""
    from .basis import select_strikes_by_r2

    t = model.horizon - 1
    if t < 1:
        raise ValueError("strike selection needs a horizon of at least 2")
    table = CoefficientTable(model.horizon, config.coc, config.seed)
    states = simulate_marginal(model, t, config.M, substream(config.seed, OUTER, t))
    re = _targets(model, bases_without_strikes, table, states, t, config, config.seed)
    v = re[:, 0] - config.coc.discount * re[:, 1]
    basis = bases_without_strikes[t]
    X = basis.evaluate(states)
    (beta,), _ = fit_targets(X, [v], basis.labels, config.drop_dependent)
    resid = v - X @ beta
    return select_strikes_by_r2(candidates, states[:, 1], resid, count)

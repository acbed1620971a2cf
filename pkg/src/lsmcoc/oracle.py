"""Reference values that do not go through the regression engine.

``nested_value_T2`` simulates the two-period recursion directly (its own
sampling loop and its own sort-based quantile), and the closed forms cover
the last period of the AR(1)-GARCH(1,1) model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .models import ArGarchParams, MarkovModel
from .risk import CocParams

# spawn-key purposes reserved for the oracle
_FIRST = 11
_SECOND = 12


class OracleUnsupportedError(ValueError):
    pass


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    standard_error: float
    method: str


def _coc_sorted(x: np.ndarray, alpha: float, eta: float) -> float:
    """CoC value of an empirical law, by full sort and a linear scan for the rank."""
    xs = np.sort(x)
    n = xs.size
    rank = int(np.argmax(np.arange(1, n + 1) / n >= alpha))
    r = xs[rank]
    e = np.sum(r - xs[:rank]) / n
    return float(r - e / (1.0 + eta))


def nested_value_T2(
    model: MarkovModel,
    n_outer: int,
    n_inner: int,
    coc: CocParams = CocParams(),
    seed: int = 0,
    batches: int = 20,
) -> OracleEstimate:
    """Brute-force ``V_0`` for a two-period model.

    Each of ``n_outer`` first-period nodes gets ``n_inner`` second-period
    draws to value ``V_1`` at that node; ``V_0`` is the CoC value of
    ``L_1 + V_1`` across nodes. The standard error comes from ``batches``
    disjoint groups of nodes, scaled by ``1/sqrt(batches)``.
    """
    if model.horizon != 2:
        raise OracleUnsupportedError(f"nested oracle needs horizon 2, model has {model.horizon}")
    if batches < 2 or n_outer % batches:
        raise ValueError("n_outer must be a multiple of batches >= 2")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_FIRST,))))
    start = np.tile(model.initial_state(), (n_outer, 1))
    first = model.step(start, 0, rng)
    x = np.empty(n_outer)
    for node in range(n_outer):
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_SECOND, node))))
        second = model.step(np.tile(first[node], (n_inner, 1)), 1, g)
        v1 = _coc_sorted(model.cashflow(2, second), coc.alpha, coc.eta)
        x[node] = model.cashflow(1, first[node : node + 1])[0] + v1
    value = _coc_sorted(x, coc.alpha, coc.eta)
    per_batch = [_coc_sorted(b, coc.alpha, coc.eta) for b in np.split(x, batches)]
    se = float(np.std(per_batch, ddof=1) / math.sqrt(batches))
    return OracleEstimate(value, se, "nested-brute-force")


def closed_form_normal_phi(coc: CocParams) -> float:
    """CoC value of a standard normal: ``q - (q Phi(q) + phi(q)) / (1 + eta)``."""
    q = float(ndtri(coc.alpha))
    if math.isinf(coc.eta):
        return q
    pdf = math.exp(-0.5 * q * q) / math.sqrt(2.0 * math.pi)
    return q - (q * float(ndtr(q)) + pdf) / (1.0 + coc.eta)


def closed_form_terminal_ar_garch(params: ArGarchParams, level, sigma, coc: CocParams):
    """``V_{T-1}`` for the single AR(1)-GARCH(1,1) model at state ``(L, sigma)``."""
    return params.alpha0 + params.alpha1 * np.asarray(level) + np.asarray(sigma) * closed_form_normal_phi(coc)


def terminal_estimate(params: ArGarchParams, level: float, sigma: float, coc: CocParams) -> OracleEstimate:
    return OracleEstimate(float(closed_form_terminal_ar_garch(params, level, sigma, coc)), 0.0, "closed-form")

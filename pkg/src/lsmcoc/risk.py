"""Empirical one-step risk functionals on inner simulation samples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class NonFiniteSampleError(ArithmeticError):
    """An inner sample contained NaN or infinite values."""


@dataclass(frozen=True)
class CocParams:
    """VaR level ``alpha`` and cost-of-capital rate ``eta``."""

    alpha: float = 0.995
    eta: float = 0.06

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eta >= 0.0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")

    @property
    def discount(self) -> float:
        """The factor ``1 / (1 + eta)`` applied to the shortfall term."""
        return 1.0 / (1.0 + self.eta)


class CocValue(NamedTuple):
    r: float
    e: float
    v: float


def quantile_rank(n: int, alpha: float) -> int:
    """Smallest ``k`` in ``1..n`` with ``k / n >= alpha``.

    This is the order statistic returned by ``min{y : F_n(y) >= alpha}``; the
    comparison is done in floating point exactly as the empirical cdf would be.
    """
    if n < 1:
        raise ValueError("empty sample")
    k = min(max(math.ceil(alpha * n), 1), n)
    while k > 1 and (k - 1) / n >= alpha:
        k -= 1
    while k < n and k / n < alpha:
        k += 1
    return k


def _as_sample(ys) -> np.ndarray:
    ys = np.asarray(ys, dtype=float).ravel()
    if ys.size == 0:
        raise ValueError("empty sample")
    if not np.isfinite(ys.sum()):
        bad = np.flatnonzero(~np.isfinite(ys))
        raise NonFiniteSampleError(
            f"{bad.size} non-finite value(s) in sample of size {ys.size}, first at index {bad[0]}"
        )
    return ys


def _order_statistic(ys: np.ndarray, k: int) -> float:
    return float(np.partition(ys, k - 1)[k - 1])


def empirical_quantile(ys, alpha: float) -> float:
    """Left-continuous empirical quantile ``min{y : F_n(y) >= alpha}``."""
    ys = _as_sample(ys)
    return _order_statistic(ys, quantile_rank(ys.size, alpha))


def shortfall_term(ys, r: float) -> float:
    """Sample mean of ``(r - y)_+``."""
    ys = _as_sample(ys)
    return float(np.maximum(r - ys, 0.0).mean())


def coc_pair(ys, params: CocParams) -> CocValue:
    """Capital ``r``, shortfall ``e`` and value ``v = r - e / (1 + eta)``."""
    ys = _as_sample(ys)
    r = _order_statistic(ys, quantile_rank(ys.size, params.alpha))
    e = float(np.maximum(r - ys, 0.0).mean())
    return CocValue(r, e, r - params.discount * e)


# --------------------------------------------------------------------------
# Spectral risk measures


class SpectralDensity:
    """Piecewise-constant, nonincreasing density on ``(0, 1)``.

    ``edges`` are the breakpoints ``0 = u_0 < u_1 < ... < u_p = 1`` and
    ``values[j]`` is the density on ``[u_j, u_{j+1})``.
    """

    def __init__(self, edges, values):
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float)
        if edges.ndim != 1 or edges.size != values.size + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must increase strictly from 0 to 1")
        if np.any(values < 0) or np.any(np.diff(values) > 0):
            raise ValueError("density must be nonnegative and nonincreasing")
        total = float(np.dot(np.diff(edges), values))
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"density integrates to {total!r}, not 1")
        self.edges = edges
        self.values = values
        self._cum = np.concatenate(([0.0], np.cumsum(np.diff(edges) * values)))

    @classmethod
    def expected_shortfall(cls, gamma: float) -> "SpectralDensity":
        """The plateau ``m(u) = 1{u <= gamma} / gamma``."""
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if gamma == 1.0:
            return cls([0.0, 1.0], [1.0])
        return cls([0.0, gamma, 1.0], [1.0 / gamma, 0.0])

    @classmethod
    def uniform(cls) -> "SpectralDensity":
        return cls([0.0, 1.0], [1.0])

    def integral(self, u):
        """``M(u) = integral of m over [0, u]``."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        j = np.clip(np.searchsorted(self.edges, u, side="right") - 1, 0, self.values.size - 1)
        return self._cum[j] + (u - self.edges[j]) * self.values[j]

    def weights(self, n: int) -> np.ndarray:
        """Mass of each order statistic: ``M(j/n) - M((j-1)/n)``."""
        grid = self.integral(np.arange(n + 1) / n)
        return np.diff(grid)


def empirical_spectral(ys, density: SpectralDensity) -> float:
    """``-sum_j y_(j) w_j`` with ascending order statistics ``y_(j)``."""
    ys = np.sort(_as_sample(ys))
    return float(-np.dot(ys, density.weights(ys.size)))

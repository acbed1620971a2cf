"""Regression bases, design matrices and least-squares fitting."""

from __future__ import annotations

import hashlib
import logging
import math
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .models import LifeModelParams

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-10
DEFAULT_STRIKES = (200.0, 162.0, 124.0, 103.0)


class RankDeficiencyError(np.linalg.LinAlgError):
    """Design matrix is numerically rank deficient.

    ``columns`` names the columns that were found to be dependent on the rest.
    """

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


# --------------------------------------------------------------------------
# OLS


def ols_fit(X, y, labels: Sequence[str] | None = None) -> np.ndarray:
    """Least-squares coefficients of ``y`` on the columns of ``X``.

    Solved by a column-pivoted QR of the column-normalised design, which
    equals ``(X'X)^-1 X'y`` whenever ``X'X`` is invertible.

    Raises
    ------
    RankDeficiencyError
        If the numerical rank (singular values below ``1e-10`` times the
        largest, after column normalisation) is less than the column count.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    m, p = X.shape
    names = list(labels) if labels is not None else [f"col{j}" for j in range(p)]
    if m < p:
        raise RankDeficiencyError(f"{m} rows cannot determine {p} coefficients", names[m:])
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite entries in regression data")

    scale = np.sqrt(np.einsum("ij,ij->j", X, X))
    zero = np.flatnonzero(scale == 0.0)
    if zero.size:
        raise RankDeficiencyError(
            "zero column(s) in design: " + ", ".join(names[j] for j in zero), [names[j] for j in zero]
        )
    Xs = X / scale
    Q, R, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    sv = scipy.linalg.svdvals(R)
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    if rank < p:
        bad = [names[j] for j in piv[rank:]]
        raise RankDeficiencyError(f"design has rank {rank} < {p}; dependent column(s): {', '.join(bad)}", bad)
    coef = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = coef
    return beta / scale


# --------------------------------------------------------------------------
# Bases


class Basis:
    """Ordered regression functions ``1, phi_1, ..., phi_N`` at time ``t``.

    ``funcs`` map a state batch ``(m, d)`` to a column of length ``m``; the
    leading constant is added automatically.
    """

    def __init__(self, t: int, funcs: Sequence[Callable], labels: Sequence[str]):
        if len(funcs) != len(labels):
            raise ValueError("one label per function")
        self.t = t
        self._funcs = tuple(funcs)
        self.labels = ("1",) + tuple(labels)

    def __len__(self):
        return len(self.labels)

    def evaluate(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        X = np.empty((states.shape[0], len(self)))
        X[:, 0] = 1.0
        for j, f in enumerate(self._funcs, start=1):
            X[:, j] = f(states)
        return X

    def predict(self, beta, states) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (len(self),):
            raise ValueError(f"{beta.size} coefficients for a basis of size {len(self)}")
        return self.evaluate(states) @ beta

    def fingerprint(self) -> str:
        return hashlib.sha256("|".join(self.labels).encode()).hexdigest()[:16]


def predict(beta, basis: Basis, state) -> float | np.ndarray:
    """``beta' Phi(state)``; a single state vector gives a float."""
    state = np.asarray(state, dtype=float)
    out = basis.predict(beta, np.atleast_2d(state))
    return float(out[0]) if state.ndim == 1 else out


class ArGarchBasis(Basis):
    """``1, L, sigma, L^2, L sigma, sigma^2`` on the state ``(L_t, sigma_{t+1})``."""

    def __init__(self, t: int):
        self.t = t
        self.labels = ("1", "L", "sigma", "L^2", "L*sigma", "sigma^2")

    def evaluate(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        L, s = states[:, 0], states[:, 1]
        return np.column_stack((np.ones_like(L), L, s, L * L, L * s, s * s))

    def predict(self, beta, states):
        b = np.asarray(beta, dtype=float)
        if b.shape != (6,):
            raise ValueError(f"{b.size} coefficients for a basis of size 6")
        states = np.atleast_2d(states)
        L, s = states[:, 0], states[:, 1]
        return b[0] + L * (b[1] + b[3] * L + b[4] * s) + s * (b[2] + b[5] * s)


def build_basis_ar_garch(t: int) -> Basis:
    return ArGarchBasis(t)


class ArGarchSumBasis(Basis):
    """Component levels and volatilities plus quadratic terms in the aggregates.

    The aggregate level ``L`` itself is left out because it is the sum of the
    component columns; the aggregate volatility is ``sqrt(sum sigma_i^2)``.
    """

    def __init__(self, t: int, k: int = 10):
        self.t = t
        self.k = k
        self.labels = (
            ("1",)
            + tuple(f"L_{i + 1}" for i in range(k))
            + tuple(f"sigma_{i + 1}" for i in range(k))
            + ("sigma", "L^2", "L*sigma", "sigma^2")
        )

    def evaluate(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        k = self.k
        L = states[:, :k].sum(axis=1)
        s2 = (states[:, k:] ** 2).sum(axis=1)
        s = np.sqrt(s2)
        return np.column_stack((np.ones(states.shape[0]), states[:, : 2 * k], s, L * L, L * s, s2))


def build_basis_ar_garch_sum(t: int, k: int = 10) -> Basis:
    return ArGarchSumBasis(t, k)


def call_value(f, strike: float, maturity: float, now: float, params: LifeModelParams):
    """``E[(F_maturity - strike)_+ | F_now = f]`` under the log-normal fund dynamics.

    Real-world drift ``mu_f``, no discounting.
    """
    f = np.asarray(f, dtype=float)
    tau = maturity - now
    if tau < 0:
        raise ValueError("maturity precedes now")
    if tau == 0:
        return np.maximum(f - strike, 0.0)
    fwd = f * math.exp(params.mu_f * tau)
    if strike == 0:
        return fwd
    vol = params.sigma_f * math.sqrt(tau)
    if vol == 0:
        return np.maximum(fwd - strike, 0.0)
    with np.errstate(divide="ignore"):
        d1 = (np.log(fwd / strike) + 0.5 * vol * vol) / vol
    return fwd * ndtr(d1) - strike * ndtr(d1 - vol)


def itm_probability(params: LifeModelParams, t: int, strike: float) -> float:
    """``P(F_t > strike)`` from the initial fund value."""
    if t == 0:
        return float(params.f0 > strike)
    if strike <= 0:
        return 1.0
    vol = params.sigma_f * math.sqrt(t)
    z = (math.log(params.f0 / strike) + (params.mu_f - 0.5 * params.sigma_f**2) * t) / vol
    return float(ndtr(z))


class LifeBasis(Basis):
    """State coordinates plus products ``a * b`` with ``a`` in ``{mu, sigma, N}``.

    ``mu`` and ``sigma`` are the mean and standard deviation of next period's
    deaths, ``N`` the number alive; ``b`` runs over polynomial, call-spread
    and closed-form call-value terms in ``(Y, F)``.
    """

    def __init__(self, t: int, params: LifeModelParams, horizon: int, strikes: Sequence[float]):
        self.t = t
        self.params = params
        self.horizon = horizon
        self.strikes = tuple(float(k) for k in strikes)
        self.k = len(params.cohorts)
        self._q = params.death_probs(t)
        fin = ["Y", "F", "Y^2", "F^2", "F^3", "Y*F", "Y*F^2"]
        for K in self.strikes:
            fin += [f"(F-{K:g})+", f"(F-{K:g})+*Y"]
        fin += ["C(F,S*,T)", "C(F,D*,t+1)", "C(F,S*,T)*Y", "C(F,D*,t+1)*Y"]
        self.financial_labels = tuple(fin)
        head = ("1", "Y", "F") + tuple(f"N_{i + 1}" for i in range(self.k))
        self.labels = head + tuple(f"{a}*{b}" for a in ("mu", "sd", "N") for b in fin)

    def death_moments(self, states):
        """Mean and standard deviation of next-period deaths, and headcount."""
        alive = states[:, 2 : 2 + self.k]
        q = self._q
        mu = alive @ q
        sd = np.sqrt(alive @ (q * (1.0 - q)))
        return mu, sd, alive.sum(axis=1)

    def financial(self, states):
        p = self.params
        Y, F = states[:, 0], states[:, 1]
        cols = [Y, F, Y * Y, F * F, F**3, Y * F, Y * F * F]
        for K in self.strikes:
            c = np.maximum(F - K, 0.0)
            cols += [c, c * Y]
        cs = call_value(F, p.s_star, self.horizon, self.t, p)
        cd = call_value(F, p.d_star, self.t + 1, self.t, p)
        cols += [cs, cd, cs * Y, cd * Y]
        return np.column_stack(cols)

    def _head(self, states):
        return np.column_stack((np.ones(states.shape[0]), states[:, 0], states[:, 1], states[:, 2 : 2 + self.k]))

    def evaluate(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        fin = self.financial(states)
        mu, sd, n = self.death_moments(states)
        return np.hstack((self._head(states), mu[:, None] * fin, sd[:, None] * fin, n[:, None] * fin))

    def predict(self, beta, states):
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (len(self),):
            raise ValueError(f"{beta.size} coefficients for a basis of size {len(self)}")
        states = np.atleast_2d(np.asarray(states, dtype=float))
        h = 3 + self.k
        nf = len(self.financial_labels)
        blocks = beta[h:].reshape(3, nf).T
        g = self.financial(states) @ blocks
        mu, sd, n = self.death_moments(states)
        return self._head(states) @ beta[:h] + mu * g[:, 0] + sd * g[:, 1] + n * g[:, 2]


def build_basis_life(
    t: int,
    params: LifeModelParams,
    horizon: int,
    strikes: Sequence[float] = DEFAULT_STRIKES,
    min_itm_prob: float = 0.0,
) -> LifeBasis:
    """Life-model basis at time ``t < horizon``.

    Strikes whose probability of finishing in the money at ``t`` is below
    ``min_itm_prob`` are dropped: their columns would be (almost) all zero.
    """
    if not 0 <= t < horizon:
        raise ValueError(f"life basis defined for 0 <= t < {horizon}")
    kept = [K for K in strikes if itm_probability(params, t, K) >= min_itm_prob]
    return LifeBasis(t, params, horizon, kept)


def select_strikes_by_r2(candidates: Sequence[float], f_values, residuals, count: int | None = None) -> list[float]:
    """Rank strikes by the R^2 of ``(F - K)_+`` against regression residuals.

    The R^2 of a one-regressor fit with intercept is the squared sample
    correlation. Returns the ``count`` best (all when ``count`` is None).
    """
    candidates = [float(k) for k in candidates]
    if not candidates:
        raise ValueError("no candidate strikes")
    count = len(candidates) if count is None else count
    f_values = np.asarray(f_values, dtype=float)
    res = np.asarray(residuals, dtype=float)
    rc = res - res.mean()
    if not np.any(rc):
        logger.warning("residuals have zero variance; strikes returned unranked")
        return candidates[:count]
    scores = []
    for K in candidates:
        x = np.maximum(f_values - K, 0.0)
        xc = x - x.mean()
        denom = np.dot(xc, xc) * np.dot(rc, rc)
        scores.append(np.dot(xc, rc) ** 2 / denom if denom > 0 else 0.0)
    order = sorted(range(len(candidates)), key=lambda j: -scores[j])
    return [candidates[j] for j in order[:count]]

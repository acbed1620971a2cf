"""Markov models for liability cash flows.

Every model works on batches of states: a state batch is a float array of
shape ``(m, dim)`` and all randomness is drawn from the generator passed in
by the caller.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np


# --------------------------------------------------------------------------
# Mortality


class MortalityLaw(Protocol):
    def death_prob(self, age):
        """Probability of dying within one year at integer ``age``."""


@dataclass(frozen=True)
class Makeham:
    """Makeham hazard ``a + b * exp(c * x)`` with a yearly death probability.

    The default constants are the Swedish M90 male table. Female lives use the
    same curve shifted ``age_shift = -6`` years.
    """

    a: float = 0.001
    b: float = 0.000012
    c: float = 0.101314
    age_shift: float = 0.0

    def cumulative_hazard(self, age):
        x = np.asarray(age, dtype=float) + self.age_shift
        if self.c == 0.0:
            return self.a + self.b + 0.0 * x
        return self.a + (self.b / self.c) * np.exp(self.c * x) * math.expm1(self.c)

    def death_prob(self, age):
        if np.any(np.asarray(age) < 0):
            raise ValueError("age must be nonnegative")
        q = -np.expm1(-self.cumulative_hazard(age))
        return float(q) if np.ndim(q) == 0 else q


MALE_M90 = Makeham()
FEMALE_M90 = Makeham(age_shift=-6.0)


def makeham_death_prob(age, law: Makeham = MALE_M90):
    """One-year death probability ``1 - exp(-integral of the hazard)``."""
    return law.death_prob(age)


# --------------------------------------------------------------------------
# Model interface


class MarkovModel(ABC):
    """A time-inhomogeneous Markov chain with a cash flow ``L_t = g_t(S_t)``."""

    dim: int
    horizon: int
    state_labels: tuple[str, ...]

    @abstractmethod
    def initial_state(self) -> np.ndarray:
        """The constant state ``S_0`` as a vector of length ``dim``."""

    @abstractmethod
    def step(self, states: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``S_{t+1}`` for every row of ``states`` (which hold ``S_t``)."""

    @abstractmethod
    def cashflow(self, t: int, states: np.ndarray) -> np.ndarray:
        """Cash flow ``g_t`` evaluated row-wise."""

    def successors(self, state, t: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """``count`` independent draws of ``S_{t+1}`` given a single ``S_t``."""
        batch = np.repeat(np.asarray(state, dtype=float).reshape(1, self.dim), count, axis=0)
        return self.step(batch, t, rng)

    def check_state(self, states: np.ndarray) -> None:
        states = np.atleast_2d(states)
        if states.shape[1] != self.dim:
            raise ValueError(f"state has {states.shape[1]} coordinates, model expects {self.dim}")


def simulate_marginal(model: MarkovModel, t: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` independent copies of ``S_t`` by simulating forward from ``S_0``."""
    if not 0 <= t <= model.horizon:
        raise ValueError(f"t={t} outside 0..{model.horizon}")
    states = np.repeat(model.initial_state().reshape(1, model.dim), count, axis=0)
    for s in range(t):
        states = model.step(states, s, rng)
    return states


# --------------------------------------------------------------------------
# AR(1)-GARCH(1,1)


@dataclass(frozen=True)
class ArGarchParams:
    alpha0: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 0.1
    alpha3: float = 0.1
    alpha4: float = 0.1
    l0: float = 0.0
    sigma1: float = 1.0

    def __post_init__(self):
        if min(self.alpha2, self.alpha3, self.alpha4) < 0:
            raise ValueError("GARCH coefficients alpha2..alpha4 must be nonnegative")
        if not self.sigma1 > 0:
            raise ValueError("sigma1 must be positive")


def ar_garch_step(params: ArGarchParams, level, sigma_next, z):
    """Advance ``(L_t, sigma_{t+1})`` to ``(L_{t+1}, sigma_{t+2})`` for noise ``z``."""
    p = params
    level_new = p.alpha0 + p.alpha1 * level + sigma_next * z
    sigma_new = np.sqrt(p.alpha2 + p.alpha3 * sigma_next * sigma_next + p.alpha4 * level_new * level_new)
    return level_new, sigma_new


class ArGarchModel(MarkovModel):
    """Single AR(1)-GARCH(1,1) liability with state ``(L_t, sigma_{t+1})``."""

    dim = 2
    state_labels = ("L", "sigma")

    def __init__(self, params: ArGarchParams = ArGarchParams(), horizon: int = 6):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.params = params
        self.horizon = horizon

    def initial_state(self):
        return np.array([self.params.l0, self.params.sigma1])

    def step(self, states, t, rng):
        z = rng.standard_normal(states.shape[0])
        level, sigma = ar_garch_step(self.params, states[:, 0], states[:, 1], z)
        return np.column_stack((level, sigma))

    def cashflow(self, t, states):
        return states[:, 0]


class ArGarchSumModel(MarkovModel):
    """Sum of independent AR(1)-GARCH(1,1) processes.

    State layout is ``(L_1..L_k, sigma_1..sigma_k)``; the cash flow is the sum
    of the levels.
    """

    def __init__(self, params: Sequence[ArGarchParams] | None = None, count: int = 10, horizon: int = 6):
        if params is None:
            params = [ArGarchParams()] * count
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.components = tuple(params)
        self.k = len(self.components)
        self.dim = 2 * self.k
        self.horizon = horizon
        self.state_labels = tuple(f"L_{i + 1}" for i in range(self.k)) + tuple(
            f"sigma_{i + 1}" for i in range(self.k)
        )
        self._a = np.array([[p.alpha0, p.alpha1, p.alpha2, p.alpha3, p.alpha4] for p in self.components]).T

    def initial_state(self):
        return np.array([p.l0 for p in self.components] + [p.sigma1 for p in self.components])

    def step(self, states, t, rng):
        k = self.k
        a0, a1, a2, a3, a4 = self._a
        z = rng.standard_normal((states.shape[0], k))
        level, sigma = states[:, :k], states[:, k:]
        level_new = a0 + a1 * level + sigma * z
        sigma_new = np.sqrt(a2 + a3 * sigma * sigma + a4 * level_new * level_new)
        return np.hstack((level_new, sigma_new))

    def cashflow(self, t, states):
        return states[:, : self.k].sum(axis=1)


# --------------------------------------------------------------------------
# Life insurance


@dataclass(frozen=True)
class LifeModelParams:
    mu_y: float = 0.03
    mu_f: float = 0.03
    sigma_y: float = 0.1
    sigma_f: float = 0.1
    rho: float = 0.4
    y0: float = 100.0
    f0: float = 100.0
    d_star: float = 100.0
    s_star: float = 110.0
    c: float = 1.0
    cohorts: tuple[tuple[int, int], ...] = ((1000, 50), (1000, 60), (1000, 70), (1000, 80))
    mortality: Makeham = field(default=MALE_M90)

    def __post_init__(self):
        object.__setattr__(self, "cohorts", tuple((int(n), int(a)) for n, a in self.cohorts))
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.sigma_y < 0 or self.sigma_f < 0:
            raise ValueError("volatilities must be nonnegative")
        if self.y0 <= 0 or self.f0 <= 0:
            raise ValueError("initial asset values must be positive")
        if min(self.d_star, self.s_star, self.c) < 0:
            raise ValueError("d_star, s_star and c must be nonnegative")
        if not self.cohorts:
            raise ValueError("at least one cohort is required")
        for size, age in self.cohorts:
            if size < 0 or age < 0:
                raise ValueError("cohort sizes and ages must be nonnegative")

    @property
    def ages(self) -> np.ndarray:
        return np.array([a for _, a in self.cohorts])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([n for n, _ in self.cohorts], dtype=float)

    def death_probs(self, t: int) -> np.ndarray:
        """Per-cohort probability of dying during ``(t, t+1)``."""
        return np.asarray(self.mortality.death_prob(self.ages + t), dtype=float)


def small_life_params(**overrides) -> LifeModelParams:
    """Four male cohorts aged 50, 60, 70, 80."""
    size = overrides.pop("cohort_size", 1000)
    return LifeModelParams(cohorts=tuple((size, a) for a in range(50, 81, 10)), **overrides)


def large_life_params(**overrides) -> LifeModelParams:
    """Ten male cohorts aged 40, 45, ..., 85."""
    size = overrides.pop("cohort_size", 1000)
    return LifeModelParams(cohorts=tuple((size, a) for a in range(40, 86, 5)), **overrides)


def life_cashflow(params: LifeModelParams, t: int, horizon: int, y, f, alive, deaths):
    """Benefits paid net of asset sales at time ``t``.

    ``alive`` and ``deaths`` have the cohort index on the last axis; deaths
    count people who died during ``(t-1, t]``.
    """
    deaths = np.asarray(deaths)
    if np.any(deaths < 0):
        raise ValueError("death counts must be nonnegative")
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    out = (np.maximum(params.d_star, f) - params.c * y) * deaths.sum(axis=-1)
    if t == horizon:
        out = out + (np.maximum(params.s_star, f) - params.c * y) * np.asarray(alive).sum(axis=-1)
    return out


class LifeModel(MarkovModel):
    """Unit-linked life portfolio with a risky asset holding.

    State layout: ``(Y, F, N_1..N_k, P_1..P_k)`` where ``P`` holds last
    period's cohort counts so the cash flow is a function of the state.
    """

    def __init__(self, params: LifeModelParams = LifeModelParams(), horizon: int = 6):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.params = params
        self.horizon = horizon
        self.k = len(params.cohorts)
        self.dim = 2 + 2 * self.k
        self.state_labels = (
            ("Y", "F")
            + tuple(f"N_{i + 1}" for i in range(self.k))
            + tuple(f"Nprev_{i + 1}" for i in range(self.k))
        )
        self._q = np.array([params.death_probs(t) for t in range(horizon)])
        if np.any((self._q < 0) | (self._q > 1)):
            raise ValueError("mortality law returned a probability outside [0, 1]")

    def initial_state(self):
        p = self.params
        return np.concatenate(([p.y0, p.f0], p.sizes, p.sizes))

    def alive(self, states):
        return states[:, 2 : 2 + self.k]

    def step(self, states, t, rng):
        p = self.params
        m = states.shape[0]
        w = rng.standard_normal((m, 2))
        y = states[:, 0] * np.exp((p.mu_y - 0.5 * p.sigma_y**2) + p.sigma_y * w[:, 0])
        shock_f = p.rho * w[:, 0] + math.sqrt(1.0 - p.rho**2) * w[:, 1]
        f = states[:, 1] * np.exp((p.mu_f - 0.5 * p.sigma_f**2) + p.sigma_f * shock_f)
        alive = self.alive(states)
        survive = 1.0 - self._q[t]
        survivors = rng.binomial(alive.astype(np.int64), survive).astype(float)
        return np.column_stack((y, f, survivors, alive))

    def cashflow(self, t, states):
        k = self.k
        alive = states[:, 2 : 2 + k]
        deaths = states[:, 2 + k :] - alive
        return life_cashflow(self.params, t, self.horizon, states[:, 0], states[:, 1], alive, deaths)


def life_step(params: LifeModelParams, state, t: int, rng: np.random.Generator, horizon: int = 6) -> np.ndarray:
    """One transition of the life model for a single augmented state."""
    return LifeModel(params, horizon).step(np.atleast_2d(np.asarray(state, dtype=float)), t, rng)[0]

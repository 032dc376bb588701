"""Server-side adaptive metric update and step-size schedules."""

import math
from dataclasses import dataclass, field

import numpy as np

from fedda.linalg import DiagonalMetric, as_vector

ELEMENTWISE = "elementwise"
NORM = "norm"


@dataclass(frozen=True)
class AdaptiveRule:
    """EMA rule for the adaptive metric.

    ``elementwise``: mu <- beta (z/eta)^2 + (1-beta) mu, H = Diag(sqrt(mu) + eps).
    ``norm``:        mu <- beta ||z||/eta + (1-beta) mu, H = (mu + eps) I.
    """

    variant: str = ELEMENTWISE
    beta: float = 0.999
    epsilon: float = 0.01

    def __post_init__(self):
        if self.variant not in (ELEMENTWISE, NORM):
            raise ValueError(f"unknown adaptive variant {self.variant!r}")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def initial_state(self, dim):
        return AdaptiveState(np.zeros(dim if self.variant == ELEMENTWISE else 1))

    def metric(self, state):
        if self.variant == ELEMENTWISE:
            return DiagonalMetric(np.sqrt(state.mu) + self.epsilon, floor=self.epsilon)
        return DiagonalMetric(state.mu + self.epsilon, floor=self.epsilon)


@dataclass(frozen=True)
class AdaptiveState:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValueError("adaptive state must be finite and nonnegative")
        object.__setattr__(self, "mu", mu)


def update_adaptive(rule, state, z_avg, eta_last):
    """One EMA step of the metric from the round's averaged dual state."""
    if not eta_last > 0:
        raise ValueError("eta_last must be positive")
    z_avg = as_vector(z_avg, "z_avg")
    if rule.variant == ELEMENTWISE:
        fresh = (z_avg / eta_last) ** 2
    else:
        fresh = np.array([np.linalg.norm(z_avg) / eta_last])
    mu = rule.beta * fresh + (1.0 - rule.beta) * state.mu
    new_state = AdaptiveState(mu)
    return new_state, rule.metric(new_state)


def theorem_constants(rho, lam, L, K, I):
    """Step-size scale ``kappa`` and momentum constant ``c`` of the convergence theorem."""
    if min(rho, lam, L, K, I) <= 0:
        raise ValueError("all inputs must be positive")
    kappa = rho * K ** (2.0 / 3.0) / (lam * L)
    c = 96.0 * lam**2 * L**2 / (K * rho**2) + rho / (72.0 * kappa**3 * lam * L * I**2)
    return kappa, c


THEOREM = "theorem"
PRACTICAL = "practical"
CONSTANT = "constant"


@dataclass(frozen=True)
class StepSchedule:
    """Local step sizes indexed by the global step ``t = round * I + i``.

    theorem:   eta_t = kappa / (w_t + t + I)^(1/3),
               w_t = max(48^3 I^6 K^2 - t - I, 14^3 sqrt(K))
    practical: eta_t = eta0 * (w / (w + t))^(1/3)
    constant:  eta_t = eta
    """

    mode: str = CONSTANT
    I: int = 1
    K: int = 1
    eta: float = 0.01
    kappa: float = 1.0
    w: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.mode not in (THEOREM, PRACTICAL, CONSTANT):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.I < 1 or self.K < 1:
            raise ValueError("I and K must be positive integers")
        if not (self.eta > 0 and self.kappa > 0 and self.w > 0 and self.c > 0):
            raise ValueError("schedule constants must be positive")

    @classmethod
    def theorem(cls, rho, lam, L, K, I):
        kappa, c = theorem_constants(rho, lam, L, K, I)
        return cls(mode=THEOREM, I=I, K=K, kappa=kappa, c=c)

    def w_at(self, t):
        if self.mode == THEOREM:
            return max(48.0**3 * self.I**6 * self.K**2 - t - self.I, 14.0**3 * math.sqrt(self.K))
        return self.w


def eta_at(sched, t):
    if t < 0:
        raise ValueError("step index must be nonnegative")
    if sched.mode == THEOREM:
        return sched.kappa / (sched.w_at(t) + t + sched.I) ** (1.0 / 3.0)
    if sched.mode == PRACTICAL:
        return sched.eta * (sched.w / (sched.w + t)) ** (1.0 / 3.0)
    return sched.eta


def step_bound_check(sched, rho, lam, L):
    """True when the first step satisfies eta_0 <= rho / (48 lam L I^2)."""
    bound = rho / (48.0 * lam * L * sched.I**2)
    # the theorem schedule sits exactly on the bound; allow rounding
    return eta_at(sched, 0) <= bound * (1.0 + 1e-12)

"""Local gradient-estimate update rules (the client-side ``U`` map)."""

from dataclasses import dataclass

import numpy as np

from fedda.linalg import as_vector, stable_mean

MVR = "mvr"
MOMENTUM = "momentum"


@dataclass(frozen=True)
class EstimatorRule:
    """Which estimator to run and where its mixing weight comes from.

    ``alpha=None`` means the schedule ``alpha = min(1, c * eta_prev**2)``;
    a float pins a constant weight in (0, 1].
    """

    variant: str = MVR
    alpha: float | None = None

    def __post_init__(self):
        if self.variant not in (MVR, MOMENTUM):
            raise ValueError(f"unknown estimator variant {self.variant!r}")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ValueError("constant alpha must lie in (0, 1]")

    def alpha_at(self, c, eta_prev):
        if self.alpha is not None:
            return self.alpha
        return alpha_schedule(c, eta_prev)


@dataclass(frozen=True)
class GradientPair:
    """Stochastic gradients at the new and old iterate on one shared minibatch.

    Build these with :meth:`from_batch` so both halves see the same indices.
    """

    g_new: np.ndarray
    g_old: np.ndarray
    batch: tuple = ()

    @classmethod
    def from_batch(cls, objective, x_new, x_old, batch):
        batch = np.asarray(batch)
        return cls(
            objective.stochastic_gradient(x_new, batch),
            objective.stochastic_gradient(x_old, batch),
            tuple(int(i) for i in batch),
        )


def update_estimate(rule, nu_prev, grads, alpha):
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    nu_prev = as_vector(nu_prev, "nu_prev")
    g_new = as_vector(grads.g_new, "g_new")
    if g_new.shape != nu_prev.shape:
        raise ValueError("dimension mismatch between estimate and gradient")
    if rule.variant == MVR:
        g_old = as_vector(grads.g_old, "g_old")
        return g_new + (1.0 - alpha) * (nu_prev - g_old)
    return alpha * g_new + (1.0 - alpha) * nu_prev


def init_estimate(per_client_grads):
    if len(per_client_grads) == 0:
        raise ValueError("init_estimate needs at least one client gradient")
    return stable_mean([as_vector(g, "gradient") for g in per_client_grads])


def alpha_schedule(c, eta_prev):
    if not (c > 0 and eta_prev > 0):
        raise ValueError("c and eta_prev must be positive")
    return min(1.0, c * eta_prev * eta_prev)

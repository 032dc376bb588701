"""Server-side aggregation for dual averaging and the baselines."""

from dataclasses import dataclass, replace

import numpy as np

from fedda.adaptivity import eta_at, update_adaptive
from fedda.federation.client import draw_batch
from fedda.federation.wire import ProtocolError
from fedda.gradient_estimators import MVR, GradientPair, update_estimate
from fedda.linalg import stable_mean
from fedda.prox import ProxProblem, solve_prox


@dataclass(frozen=True, eq=False)
class ServerState:
    x: np.ndarray
    nu: np.ndarray
    h: object
    adaptive: object
    round: int = 0


def sample_clients(K, r, seed, round_index):
    """``r`` distinct client ids, uniform over subsets, fixed by ``(seed, round)``."""
    if not 1 <= r <= K:
        raise ValueError(f"need 1 <= r <= K, got r={r}, K={K}")
    if r == K:
        return list(range(K))
    rng = np.random.default_rng([seed, round_index])
    return sorted(int(k) for k in rng.choice(K, size=r, replace=False))


def _mean_uploads(arrays):
    dims = {np.shape(a) for a in arrays}
    if len(dims) != 1:
        raise ProtocolError(f"uploads disagree on dimension: {sorted(dims)}")
    return stable_mean(arrays)


def server_round(state, uploads, rule, lam, constraint, eta_last):
    """Average dual states and estimates, map back through the prox, refresh H."""
    if not uploads:
        raise ValueError("server_round needs at least one upload")
    z_bar = _mean_uploads([u[0] for u in uploads])
    nu_bar = _mean_uploads([u[1] for u in uploads])
    if z_bar.shape != state.x.shape:
        raise ProtocolError("upload dimension does not match the model")
    x_new = solve_prox(ProxProblem(z_bar, state.x, state.h, lam, constraint))
    adaptive, h = update_adaptive(rule, state.adaptive, z_bar, eta_last)
    return ServerState(x_new, nu_bar, h, adaptive, state.round + 1)


def fedda_i1_round(state, objectives, *, schedule, estimator, rule, lam, constraint, batch_size,
                   seed, identical_streams=False):
    """Fused single-local-step round (prox first, then estimator updates, then H).

    Full participation only. Returns the new state and the per-client estimates.
    """
    t = state.round
    eta = eta_at(schedule, t)
    x_new = solve_prox(ProxProblem(-eta * state.nu, state.x, state.h, lam, constraint))
    alpha = estimator.alpha_at(schedule.c, eta)
    nus = []
    for k, obj in enumerate(objectives):
        stream = 0 if identical_streams else k
        batch = draw_batch(obj, batch_size, seed, stream, t, 1)
        if estimator.variant == MVR:
            pair = GradientPair.from_batch(obj, x_new, state.x, batch)
        else:
            g = obj.stochastic_gradient(x_new, batch)
            pair = GradientPair(g, g)
        nus.append(update_estimate(estimator, state.nu, pair, alpha))
    # nu_tau plays the role of -z_bar / eta in the metric refresh
    adaptive, h = update_adaptive(rule, state.adaptive, state.nu, 1.0)
    return ServerState(x_new, stable_mean(nus), h, adaptive, state.round + 1), nus


@dataclass(frozen=True, eq=False)
class BaselineState:
    x: np.ndarray
    momentum: np.ndarray
    m: np.ndarray
    v: np.ndarray
    round: int = 0

    @classmethod
    def start(cls, x):
        z = np.zeros_like(x)
        return cls(np.array(x, dtype=np.float64), z, z, z, 0)


def baseline_round(variant, state, uploads, *, lr, I, constraint, server_lr=1.0, beta1=0.9,
                   beta2=0.999, epsilon=1e-8):
    """Aggregate baseline uploads (each upload's first array is the client's final x).

    fedavg:  x <- mean x_k (scaled by ``server_lr``)
    fedadam: Adam step on the averaged model delta
    fedcm:   like fedavg, and the broadcast momentum becomes the mean delta / (lr I)
    """
    if not uploads:
        raise ValueError("baseline_round needs at least one upload")
    x_avg = _mean_uploads([u[0] for u in uploads])
    delta = x_avg - state.x
    if variant == "fedadam":
        m = beta1 * state.m + (1.0 - beta1) * delta
        v = beta2 * state.v + (1.0 - beta2) * delta * delta
        x_new = constraint.project(state.x + server_lr * m / (np.sqrt(v) + epsilon))
        return replace(state, x=x_new, m=m, v=v, round=state.round + 1)
    x_new = constraint.project(state.x + server_lr * delta)
    if variant == "fedcm":
        return replace(state, x=x_new, momentum=-delta / (lr * I), round=state.round + 1)
    if variant == "fedavg":
        return replace(state, x=x_new, round=state.round + 1)
    raise ValueError(f"unknown baseline {variant!r}")

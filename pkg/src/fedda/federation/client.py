"""Client-side local loops: the dual-averaging client and the baseline clients."""

from dataclasses import dataclass

import numpy as np

from fedda.adaptivity import eta_at
from fedda.gradient_estimators import MVR, GradientPair, update_estimate
from fedda.linalg import DiagonalMetric
from fedda.prox import ProxProblem, ProxSolverError, Unconstrained, solve_prox

FEDDA = "fedda"
FEDDA_I1 = "fedda-i1"
FEDAVG = "fedavg"
FEDADAM = "fedadam"
FEDCM = "fedcm"
BASELINES = (FEDAVG, FEDADAM, FEDCM)
ALGORITHMS = (FEDDA, FEDDA_I1) + BASELINES


def client_rng(seed, stream, round_index, step):
    """Generator for one (client, round, step) cell, independent of execution order."""
    return np.random.default_rng([seed, stream, round_index, step])


def draw_batch(objective, batch_size, seed, stream, round_index, step):
    """Minibatch indices drawn with replacement; ``batch_size=0`` means the full set."""
    n = objective.sample_count
    if not batch_size or n == 1:
        return np.arange(n)
    return client_rng(seed, stream, round_index, step).integers(0, n, size=batch_size)


@dataclass
class ClientRound:
    z: np.ndarray
    nu: np.ndarray
    x_hist: np.ndarray | None = None
    z_hist: np.ndarray | None = None
    nu_hist: np.ndarray | None = None


def client_round(x, nu, h, objective, *, schedule, round_index, estimator, constraint, lam,
                 batch_size, seed, stream, trace=False):
    """One round of local dual averaging starting from the broadcast ``(x, nu, h)``.

    Step ``i`` uses the global step index ``t = round_index * I + i``. The
    anchor ``x`` and metric ``h`` stay fixed for the whole round.
    """
    I = schedule.I
    x0 = np.array(x, dtype=np.float64)
    nu = np.array(nu, dtype=np.float64)
    z = np.zeros_like(x0)
    x_cur = x0
    if trace:
        x_hist, z_hist, nu_hist = [x0], [z], [nu]
    for i in range(I):
        t = round_index * I + i
        eta = eta_at(schedule, t)
        z = z - eta * nu
        try:
            x_next = solve_prox(ProxProblem(z, x0, h, lam, constraint))
        except ProxSolverError as exc:
            raise ProxSolverError(f"round {round_index} step {i} client {stream}: {exc}", exc.residual) from exc
        batch = draw_batch(objective, batch_size, seed, stream, round_index, i + 1)
        alpha = estimator.alpha_at(schedule.c, eta)
        if estimator.variant == MVR:
            pair = GradientPair.from_batch(objective, x_next, x_cur, batch)
        else:
            g = objective.stochastic_gradient(x_next, batch)
            pair = GradientPair(g, g)
        nu = update_estimate(estimator, nu, pair, alpha)
        x_cur = x_next
        if trace:
            x_hist.append(x_cur)
            z_hist.append(z)
            nu_hist.append(nu)
    if trace:
        return ClientRound(z, nu, np.array(x_hist), np.array(z_hist), np.array(nu_hist))
    return ClientRound(z, nu)


def local_sgd(x, objective, *, lr, I, round_index, constraint, batch_size, seed, stream,
              momentum=None, alpha=1.0, trace=False):
    """Baseline local loop: ``I`` projected SGD steps.

    With ``momentum`` set the step direction is ``alpha * g + (1 - alpha) * momentum``
    (the client update of FedCM).
    """
    x = np.array(x, dtype=np.float64)
    hist = [x] if trace else None
    for i in range(I):
        batch = draw_batch(objective, batch_size, seed, stream, round_index, i + 1)
        g = objective.stochastic_gradient(x, batch)
        if momentum is not None:
            g = alpha * g + (1.0 - alpha) * momentum
        x = constraint.project(x - lr * g)
        if trace:
            hist.append(x)
    return x, (np.array(hist) if trace else None)


@dataclass(frozen=True)
class LocalConfig:
    """Everything a client needs besides its objective and the broadcast."""

    algorithm: str
    schedule: object
    estimator: object
    constraint: object = Unconstrained()
    lam: float = 1.0
    batch_size: int = 0
    seed: int = 0
    metric_floor: float = 1e-12
    lr: float = 0.01
    fedcm_alpha: float = 0.9
    trace: bool = False
    identical_streams: bool = False


class ClientWorker:
    """Answers broadcasts for one client. Used in-process and behind sockets."""

    def __init__(self, client_id, objective, config):
        self.client_id = client_id
        self.objective = objective
        self.config = config

    @property
    def stream(self):
        return 0 if self.config.identical_streams else self.client_id

    def run(self, msg):
        cfg = self.config
        if cfg.algorithm == FEDDA:
            h = DiagonalMetric(msg.h_diag, floor=cfg.metric_floor)
            out = client_round(
                msg.x, msg.nu, h, self.objective,
                schedule=cfg.schedule, round_index=msg.round, estimator=cfg.estimator,
                constraint=cfg.constraint, lam=cfg.lam, batch_size=cfg.batch_size,
                seed=cfg.seed, stream=self.stream, trace=cfg.trace,
            )
            arrays = (out.z, out.nu)
            if cfg.trace:
                arrays += (out.x_hist.ravel(), out.z_hist.ravel(), out.nu_hist.ravel())
            return arrays
        if cfg.algorithm in BASELINES:
            momentum = msg.nu if cfg.algorithm == FEDCM else None
            x, hist = local_sgd(
                msg.x, self.objective, lr=cfg.lr, I=cfg.schedule.I, round_index=msg.round,
                constraint=cfg.constraint, batch_size=cfg.batch_size, seed=cfg.seed,
                stream=self.stream, momentum=momentum, alpha=cfg.fedcm_alpha, trace=cfg.trace,
            )
            return (x,) if hist is None else (x, hist.ravel())
        raise ValueError(f"client cannot run algorithm {cfg.algorithm!r}")

"""Experiment driver: builds everything from a config and runs the round loop."""

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from fedda.adaptivity import AdaptiveRule, StepSchedule, eta_at
from fedda.config import serialize_config
from fedda.federation.client import BASELINES, FEDCM, FEDDA, FEDDA_I1, ClientWorker, LocalConfig, draw_batch
from fedda.federation.server import (BaselineState, ServerState, baseline_round, fedda_i1_round,
                                     sample_clients, server_round)
from fedda.federation.transport import make_transport
from fedda.federation.wire import Broadcast
from fedda.gradient_estimators import EstimatorRule, init_estimate
from fedda.linalg import stable_mean
from fedda.metrics import (NAN, MetricsRow, MetricsTable, density, emit_csv, emit_svg, round_rows,
                           virtual_round)
from fedda.problems import (FederatedProblem, LogisticRegression, NonconvexRegularizedLogistic,
                            PartitionSpec, classification_blobs, heterogeneous_least_squares,
                            heterogeneous_quadratics, load_csv, partition_dataset, sparse_regression)
from fedda.prox import make_constraint

log = logging.getLogger(__name__)


def build_problem(cfg):
    p, K = cfg.problem, cfg.run.K
    if p.kind == "quadratic":
        return heterogeneous_quadratics(K, p.dim, p.seed, (p.curvature_lo, p.curvature_hi), p.shift,
                                        p.shared_curvature, p.noise_std, p.samples)
    if p.kind == "least_squares":
        return heterogeneous_least_squares(K, p.dim, p.samples, p.seed, p.noise_std, p.spread)
    if p.kind == "sparse_regression":
        return sparse_regression(K, p.dim, p.samples, p.seed, p.support, p.magnitude, p.noise_std)[0]
    # logistic kinds: partition by class so clients see skewed label mixes
    if p.path:
        X, labels = load_csv(p.path)
        target = (labels == p.positive_label).astype(float)
    else:
        X, labels = classification_blobs(p.num_classes, p.samples, p.dim, p.seed)
        target = (labels % 2 == 1).astype(float)
    parts = partition_dataset(labels, PartitionSpec(K, cfg.partition.het_fraction, cfg.partition.seed))
    if any(idx.size == 0 for idx in parts):
        raise ValueError("partition left a client without samples; lower het_fraction or K")
    if p.kind == "logistic":
        return FederatedProblem([LogisticRegression(X[idx], target[idx]) for idx in parts])
    return FederatedProblem([NonconvexRegularizedLogistic(X[idx], target[idx], p.reg_weight) for idx in parts])


def build_constraint(cfg, dim):
    c = cfg.constraint
    radius = c.radius if c.radius > 0 else c.radius_scale * dim
    return make_constraint(c.kind, dim, radius=radius, lo=c.lo, hi=c.hi)


def build_schedule(cfg, problem):
    s, run = cfg.schedule, cfg.run
    if s.mode == "theorem":
        L = s.L if s.L > 0 else problem.lipschitz()
        return StepSchedule.theorem(cfg.adaptive.epsilon, run.lam, L, run.K, run.I)
    return StepSchedule(mode=s.mode, I=run.I, K=run.K, eta=s.eta, w=s.w, c=s.c)


def build_estimator(cfg):
    e = cfg.estimator
    return EstimatorRule(e.variant, e.alpha if e.alpha_mode == "constant" else None)


def build_rule(cfg):
    a = cfg.adaptive
    return AdaptiveRule(a.variant, a.beta, a.epsilon)


def initial_server_state(cfg, problem, constraint, rule):
    """``x_0`` from the config fill value (projected), ``nu_0`` from one init batch per client."""
    run = cfg.run
    x0 = constraint.project(np.full(problem.dim, float(run.x0)))
    grads = []
    for k, obj in enumerate(problem.clients):
        stream = 0 if run.identical_client_streams else k
        batch = draw_batch(obj, run.init_batch, run.seed, stream, 0, 0)
        grads.append(obj.stochastic_gradient(x0, batch))
    adaptive = rule.initial_state(problem.dim)
    return ServerState(x0, init_estimate(grads), rule.metric(adaptive), adaptive, 0)


@dataclass
class RoundSnapshot:
    """Server state at the start of a round, plus that round's diagnostics when traced."""

    round: int
    x: np.ndarray
    nu: np.ndarray
    h_diag: np.ndarray
    diagnostics: object = None


@dataclass
class RunResult:
    table: MetricsTable
    x: np.ndarray
    problem: FederatedProblem
    constraint: object
    schedule: StepSchedule
    state: object = None
    snapshots: list = field(default_factory=list)


def _untraced_rows(round_index, I, etas, alphas, problem, x, threshold):
    rows = []
    for i in range(I):
        row = MetricsRow(t=round_index * I + i, round=round_index, eta=etas[i], alpha=alphas[i])
        if i == 0:
            row.loss = problem.loss(x)
            row.density = density(x, threshold)
        rows.append(row)
    return rows


def _histories(arrays_by_client, I, d):
    x = np.stack([a[2].reshape(I + 1, d) for a in arrays_by_client])
    z = np.stack([a[3].reshape(I + 1, d) for a in arrays_by_client])
    nu = np.stack([a[4].reshape(I + 1, d) for a in arrays_by_client])
    return x, z, nu


class _Loop:
    def __init__(self, cfg, problem, keep_snapshots):
        self.cfg = cfg
        self.problem = problem
        self.keep = keep_snapshots
        run = cfg.run
        self.I, self.K, self.r = run.I, run.K, cfg.participants
        self.d = problem.dim
        self.constraint = build_constraint(cfg, self.d)
        self.schedule = build_schedule(cfg, problem)
        self.estimator = build_estimator(cfg)
        self.rule = build_rule(cfg)
        self.trace = run.trace_clients
        self.table = MetricsTable()
        self.snapshots = []
        self.local = LocalConfig(
            algorithm=run.algorithm, schedule=self.schedule, estimator=self.estimator,
            constraint=self.constraint, lam=run.lam, batch_size=run.batch_size, seed=run.seed,
            metric_floor=cfg.adaptive.epsilon, lr=cfg.baseline.lr, fedcm_alpha=cfg.baseline.fedcm_alpha,
            trace=self.trace, identical_streams=run.identical_client_streams,
        )
        self.workers = [ClientWorker(k, obj, self.local) for k, obj in enumerate(problem.clients)]

    def schedule_for(self, tau):
        etas = [eta_at(self.schedule, tau * self.I + i) for i in range(self.I)]
        alphas = [self.estimator.alpha_at(self.schedule.c, e) for e in etas]
        return etas, alphas

    def rows_from_diag(self, diag, alphas):
        cfg = self.cfg
        return round_rows(diag, self.problem, I=self.I, rho=cfg.adaptive.epsilon, lam=cfg.run.lam,
                          constraint=self.constraint, alphas=alphas, threshold=cfg.run.density_threshold)

    def fedda_round(self, transport, state, tau):
        ids = sample_clients(self.K, self.r, self.cfg.run.seed, tau)
        msg = Broadcast(state.x, state.nu, state.h.diag, tau, tau * self.I)
        uploads = transport.exchange(msg, ids)
        etas, alphas = self.schedule_for(tau)
        diag = None
        if self.trace:
            by_id = {u.client_id: u.arrays for u in uploads}
            # unsampled clients are replayed here for the virtual average only
            arrays = [by_id[k] if k in by_id else self.workers[k].run(msg) for k in range(self.K)]
            xs, zs, nus = _histories(arrays, self.I, self.d)
            diag = virtual_round(tau, state.x, state.h, self.cfg.run.lam, self.constraint, self.problem,
                                 xs, zs, nus, etas)
            rows = self.rows_from_diag(diag, alphas)
        else:
            rows = _untraced_rows(tau, self.I, etas, alphas, self.problem, state.x,
                                  self.cfg.run.density_threshold)
        self.table.extend(rows)
        if self.keep:
            self.snapshots.append(RoundSnapshot(tau, state.x, state.nu, state.h.diag, diag))
        pairs = [(u.arrays[0], u.arrays[1]) for u in uploads]
        return server_round(state, pairs, self.rule, self.cfg.run.lam, self.constraint, etas[-1])

    def fused_round(self, state, tau):
        run = self.cfg.run
        new, client_nus = fedda_i1_round(
            state, self.problem.clients, schedule=self.schedule, estimator=self.estimator, rule=self.rule,
            lam=run.lam, constraint=self.constraint, batch_size=run.batch_size, seed=run.seed,
            identical_streams=run.identical_client_streams,
        )
        etas, alphas = self.schedule_for(tau)
        diag = None
        if self.trace:
            K, d = self.K, self.d
            z1 = -etas[0] * state.nu
            xs = np.stack([np.stack([state.x, new.x])] * K)
            zs = np.stack([np.stack([np.zeros(d), z1])] * K)
            nus = np.stack([np.stack([state.nu, v]) for v in client_nus])
            diag = virtual_round(tau, state.x, state.h, run.lam, self.constraint, self.problem, xs, zs, nus, etas)
            rows = self.rows_from_diag(diag, alphas)
        else:
            rows = _untraced_rows(tau, 1, etas, alphas, self.problem, state.x, run.density_threshold)
        self.table.extend(rows)
        if self.keep:
            self.snapshots.append(RoundSnapshot(tau, state.x, state.nu, state.h.diag, diag))
        return new

    def baseline_step(self, transport, state, tau):
        cfg, I = self.cfg, self.I
        b = cfg.baseline
        ids = sample_clients(self.K, self.r, cfg.run.seed, tau)
        msg = Broadcast(state.x, state.momentum, np.ones(1), tau, tau * I)
        uploads = transport.exchange(msg, ids)
        alpha = b.fedcm_alpha if cfg.run.algorithm == FEDCM else NAN
        hist = np.stack([u.arrays[1].reshape(I + 1, self.d) for u in uploads]) if self.trace else None
        for i in range(I):
            row = MetricsRow(t=tau * I + i, round=tau, eta=b.lr, alpha=alpha)
            x_bar = stable_mean(hist[:, i]) if hist is not None else (state.x if i == 0 else None)
            if x_bar is not None:
                row.loss = self.problem.loss(x_bar)
                row.grad_map = float(np.linalg.norm(self.problem.gradient(x_bar)))
                row.density = density(x_bar, cfg.run.density_threshold)
            self.table.append(row)
        if self.keep:
            self.snapshots.append(RoundSnapshot(tau, state.x, state.momentum, np.ones(1)))
        return baseline_round(cfg.run.algorithm, state, [u.arrays for u in uploads], lr=b.lr, I=I,
                              constraint=self.constraint, server_lr=b.server_lr, beta1=b.beta1,
                              beta2=b.beta2, epsilon=b.epsilon)


def _write_outputs(cfg, table, out_dir, error=None):
    os.makedirs(out_dir, exist_ok=True)
    emit_csv(table.rows, os.path.join(out_dir, cfg.output.csv))
    with open(os.path.join(out_dir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
    if error is not None:
        with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
            json.dump(error, fh, indent=2)
            fh.write("\n")
    elif cfg.output.svg:
        emit_svg(table.rows, cfg.output.svg_fields, os.path.join(out_dir, cfg.output.svg))


def run_training(cfg, problem=None, *, out_dir=None, keep_snapshots=False):
    """Run ``cfg.run.E`` rounds and return a :class:`RunResult`.

    With ``out_dir`` set the CSV, SVG and a copy of the config are written
    there. If a round fails, the rows gathered so far are flushed together
    with ``error.json`` before the exception propagates.
    """
    problem = build_problem(cfg) if problem is None else problem
    if problem.K != cfg.run.K:
        raise ValueError(f"problem has {problem.K} clients but run.K = {cfg.run.K}")
    loop = _Loop(cfg, problem, keep_snapshots)
    algo = cfg.run.algorithm
    if algo in BASELINES:
        state = BaselineState.start(loop.constraint.project(np.full(problem.dim, float(cfg.run.x0))))
    else:
        state = initial_server_state(cfg, problem, loop.constraint, loop.rule)
    log.info("%s: K=%d r=%d I=%d E=%d d=%d, initial loss %.6g", cfg.variant_name(), loop.K, loop.r,
             loop.I, cfg.run.E, problem.dim, problem.loss(state.x))
    tau = 0
    transport = None
    try:
        if algo != FEDDA_I1:
            transport = make_transport(cfg.run.transport, loop.workers)
        for tau in range(cfg.run.E):
            if algo == FEDDA:
                state = loop.fedda_round(transport, state, tau)
            elif algo == FEDDA_I1:
                state = loop.fused_round(state, tau)
            else:
                state = loop.baseline_step(transport, state, tau)
    except Exception as exc:
        if out_dir is not None:
            _write_outputs(cfg, loop.table, out_dir, {
                "round": tau, "error": type(exc).__name__, "message": str(exc), "rows_written": len(loop.table),
            })
        raise
    finally:
        if transport is not None:
            transport.close()
    if out_dir is not None:
        _write_outputs(cfg, loop.table, out_dir)
    last = loop.table.column("loss")
    finite = last[np.isfinite(last)]
    log.info("done: %d rows, last logged loss %s", len(loop.table),
             f"{finite[-1]:.6g}" if finite.size else "n/a")
    return RunResult(loop.table, state.x, problem, loop.constraint, loop.schedule, state, loop.snapshots)


def final_mean(table, name, fraction=0.5):
    """Mean of a column over the trailing ``fraction`` of rows, ignoring absent values."""
    col = table.column(name)
    col = col[int(math.floor(len(col) * (1.0 - fraction))):]
    col = col[np.isfinite(col)]
    return float(col.mean()) if col.size else NAN

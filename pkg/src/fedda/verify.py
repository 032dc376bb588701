"""Self-check suites behind ``fedda verify``.

prox-oracle  weighted prox solver against a brute-force projected-gradient/grid oracle
lemmas       local-update inequalities and tracker identities on a live traced run
rate         decay of the stationarity measure between a short and a long run
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from fedda.config import ExperimentConfig
from fedda.linalg import DiagonalMetric
from fedda.problems import heterogeneous_least_squares, heterogeneous_quadratics
from fedda.prox import Box, L1Ball, L2Ball, ProxProblem, Unconstrained, kkt_residual, prox_objective, solve_prox

SUITES = ("prox-oracle", "lemmas", "rate")


@dataclass
class SuiteReport:
    name: str
    passed: bool = True
    lines: list = field(default_factory=list)

    def check(self, label, ok, detail=""):
        self.passed &= bool(ok)
        self.lines.append(f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else ""))


# ---------------------------------------------------------------------------
# prox oracle


def random_prox_problem(rng, kind, dim=None):
    d = int(dim or rng.integers(1, 6))
    h = np.exp(rng.uniform(-1.5, 1.5, size=d))
    if rng.random() < 0.2:
        h = np.full(d, h[0])
    lam = float(np.exp(rng.uniform(-1.0, 1.0)))
    z = rng.standard_normal(d) * float(np.exp(rng.uniform(-1.0, 1.5)))
    x0 = rng.standard_normal(d)
    if kind == "box":
        lo = -rng.uniform(0.1, 1.5, size=d)
        s = Box(lo, lo + rng.uniform(0.1, 3.0, size=d))
    elif kind == "l2":
        s = L2Ball(0.3 * rng.standard_normal(d), float(rng.uniform(0.2, 2.0)))
    elif kind == "l1":
        s = L1Ball(0.3 * rng.standard_normal(d), float(rng.uniform(0.2, 2.0)))
    else:
        s = Unconstrained()
    return ProxProblem(z, x0, DiagonalMetric(h), lam, s)


def _grid_members(s, pts):
    if isinstance(s, Box):
        return np.all((pts >= s.lo) & (pts <= s.hi), axis=1)
    if isinstance(s, L2Ball):
        return np.linalg.norm(pts - s.center, axis=1) <= s.radius
    if isinstance(s, L1Ball):
        return np.abs(pts - s.center).sum(axis=1) <= s.radius
    return np.ones(len(pts), dtype=bool)


def brute_force_prox(p, iters=600, grid=301):
    """Accelerated projected gradient with Euclidean projections, plus a grid for d <= 2."""
    h = p.h.effective(p.z.size)
    Lg, mu = h.max() / p.lam, h.min() / p.lam
    q = (math.sqrt(Lg / mu) - 1.0) / (math.sqrt(Lg / mu) + 1.0)
    x = p.set.project(p.x0)
    y = x
    for _ in range(iters):
        grad = -p.z + h * (y - p.x0) / p.lam
        x_new = p.set.project(y - grad / Lg)
        y = x_new + q * (x_new - x)
        x = x_new
    best = prox_objective(p, x)
    if p.z.size <= 2 and not isinstance(p.set, Unconstrained):
        center = p.set.project(p.x0)
        axes = [np.linspace(center[j] - 4.0, center[j] + 4.0, grid) for j in range(p.z.size)]
        pts = np.stack(np.meshgrid(*axes), axis=-1).reshape(-1, p.z.size)
        pts = pts[_grid_members(p.set, pts)]
        if len(pts):
            dx = pts - p.x0
            vals = -pts @ p.z + (dx * dx) @ h / (2.0 * p.lam)
            best = min(best, float(vals.min()))
    return x, best


def prox_oracle_suite(n=1000, seed=0, obj_tol=1e-6, kkt_tol=1e-8):
    report = SuiteReport("prox-oracle")
    rng = np.random.default_rng(seed)
    kinds = ("none", "box", "l2", "l1")
    worst_gap, worst_kkt = -math.inf, 0.0
    t0 = time.perf_counter()
    for j in range(n):
        p = random_prox_problem(rng, kinds[j % 4])
        x = solve_prox(p)
        _, oracle = brute_force_prox(p)
        worst_gap = max(worst_gap, prox_objective(p, x) - oracle)
        worst_kkt = max(worst_kkt, kkt_residual(p, x))
    elapsed = time.perf_counter() - t0
    report.check("objective vs oracle", worst_gap <= obj_tol, f"worst excess {worst_gap:.3e} over {n} problems")
    report.check("KKT residual", worst_kkt <= kkt_tol, f"worst {worst_kkt:.3e}")
    report.check("runtime", elapsed < 30.0, f"{elapsed:.1f}s")
    return report


# ---------------------------------------------------------------------------
# local-update lemmas on a live run


def lemma_run(E=200, K=8, I=5, seed=0, constraint="none"):
    from fedda.federation.runner import run_training

    cfg = ExperimentConfig().with_overrides(
        run={"K": K, "I": I, "E": E, "seed": seed, "batch_size": 4, "init_batch": 4, "trace_clients": True},
        problem={"kind": "quadratic", "dim": 6, "samples": 32, "noise_std": 0.5, "seed": seed},
        schedule={"mode": "constant", "eta": 0.005},
        estimator={"variant": "mvr", "alpha_mode": "constant", "alpha": 0.3},
        constraint={"kind": constraint, "radius": 1.5},
    )
    problem = heterogeneous_quadratics(K, 6, seed, shift=1.0, noise_std=0.5, samples=32)
    return cfg, run_training(cfg, problem, keep_snapshots=True)


def lemma_violations(cfg, result, slack=1e-9):
    """Count violations of each local-update inequality and tracker identity."""
    lam, rho, I = cfg.run.lam, cfg.adaptive.epsilon, cfg.run.I
    unconstrained = cfg.constraint.kind == "none"
    counts = dict.fromkeys(("client", "virtual", "state", "consensus", "dual_identity",
                            "grad_bound", "grad_map_bound"), 0)
    checked = 0
    rows = iter(result.table.rows)
    for snap in result.snapshots:
        dg = snap.diagnostics
        round_rows = [next(rows) for _ in range(I)]
        g_vals = np.array([r.measure_g for r in round_rows])
        for i in range(I):
            eta = dg.etas[i]
            d_k = (dg.x_clients[:, i] - dg.x_clients[:, i + 1]) / eta
            for k in range(d_k.shape[0]):
                nu, d = dg.nu_clients[k, i], d_k[k]
                ok = lam * nu @ d >= rho * d @ d - slack and lam * np.linalg.norm(nu) >= rho * np.linalg.norm(d) - slack
                counts["client"] += not ok
            d_t = (dg.x_tilde[i] - dg.x_tilde[i + 1]) / eta
            nu_b = dg.nu_bar[i]
            ok = lam * nu_b @ d_t >= rho * d_t @ d_t - slack and lam * np.linalg.norm(nu_b) >= rho * np.linalg.norm(d_t) - slack
            counts["virtual"] += not ok
            cz_bound = (I - 1) * sum(dg.etas[l] ** 2 * round_rows[l].consensus_nu for l in range(i))
            counts["consensus"] += not round_rows[i].consensus_z <= cz_bound + slack
            weights = dg.etas[: i + 1] / eta
            gm_bound = math.sqrt(2.0) * lam / rho * float(weights @ np.sqrt(g_vals[: i + 1]))
            counts["grad_map_bound"] += not round_rows[i].grad_map <= gm_bound + slack
            if unconstrained:
                hmax = snap.h_diag.max()
                gnorm2 = float(dg.grads[i] @ dg.grads[i])
                counts["grad_bound"] += not gnorm2 <= 2.0 * hmax**2 / rho**2 * g_vals[i] + slack
            checked += 1
        for i in range(I + 1):
            for k in range(dg.z_clients.shape[0]):
                lhs = lam * np.linalg.norm(dg.z_clients[k, i] - dg.z_bar[i])
                rhs = rho * np.linalg.norm(dg.x_clients[k, i] - dg.x_tilde[i])
                counts["state"] += not lhs >= rhs - slack
            ref = -sum(dg.etas[l] * dg.nu_bar[l] for l in range(i)) if i else np.zeros_like(dg.anchor)
            scale = 1.0 + np.abs(ref).max()
            counts["dual_identity"] += not np.abs(dg.z_bar[i] - ref).max() <= 1e-12 * scale
    return counts, checked


def lemmas_suite(E=200, K=8, I=5, seed=0):
    report = SuiteReport("lemmas")
    for constraint in ("none", "l2"):
        cfg, result = lemma_run(E, K, I, seed, constraint)
        counts, checked = lemma_violations(cfg, result)
        for name, bad in counts.items():
            if name == "grad_bound" and constraint != "none":
                continue
            report.check(f"{constraint}/{name}", bad == 0, f"{bad} violations over {checked} steps")
    return report


# ---------------------------------------------------------------------------
# rate


def rate_config(T, K=8, I=5, seed=0):
    return ExperimentConfig().with_overrides(
        run={"K": K, "I": I, "E": T // I, "seed": seed, "batch_size": 4, "init_batch": 0,
             "trace_clients": True},
        schedule={"mode": "theorem"},
        estimator={"variant": "mvr", "alpha_mode": "schedule"},
        adaptive={"variant": "elementwise", "beta": 0.999, "epsilon": 10.0},
    )


def rate_problem(K=8, seed=0):
    return heterogeneous_least_squares(K, 3, 32, seed, noise_std=0.0, spread=0.3)


def rate_slope(horizons=(2000, 16000), K=8, I=5, seed=0):
    """Least-squares slope of log(mean trailing-half G) against log T."""
    from fedda.federation.runner import final_mean, run_training

    problem = rate_problem(K, seed)
    means = []
    for T in horizons:
        res = run_training(rate_config(T, K, I, seed), problem)
        means.append(final_mean(res.table, "measure_g", 0.5))
    slope = float(np.polyfit(np.log(horizons), np.log(means), 1)[0])
    return slope, means


def rate_suite(threshold=-0.5):
    report = SuiteReport("rate")
    t0 = time.perf_counter()
    slope, means = rate_slope()
    elapsed = time.perf_counter() - t0
    report.check("slope", slope <= threshold, f"{slope:.3f} (means {means[0]:.3e}, {means[-1]:.3e})")
    report.check("runtime", elapsed < 120.0, f"{elapsed:.1f}s")
    return report


def run_suite(name):
    if name == "prox-oracle":
        return prox_oracle_suite()
    if name == "lemmas":
        return lemmas_suite()
    if name == "rate":
        return rate_suite()
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")

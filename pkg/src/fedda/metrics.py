"""Per-step diagnostics, CSV/SVG output."""

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from fedda.linalg import stable_mean
from fedda.prox import ProxProblem, solve_prox

NAN = float("nan")


@dataclass
class MetricsRow:
    t: int
    round: int
    loss: float = NAN
    measure_g: float = NAN
    term_drift: float = NAN
    term_esterr: float = NAN
    grad_map: float = NAN
    consensus_z: float = NAN
    consensus_nu: float = NAN
    density: float = NAN
    eta: float = NAN
    alpha: float = NAN


COLUMNS = tuple(f.name for f in fields(MetricsRow))


class MetricsTable:
    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def append(self, row):
        self.rows.append(row)

    def extend(self, rows):
        self.rows.extend(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name):
        if name not in COLUMNS:
            raise KeyError(name)
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)


def measure_gt(x_t, x_next, nu_bar, grad_at_x, eta, rho, lam):
    """Stationarity measure: scaled virtual drift plus estimate error.

    Returns ``(measure, drift_term, error_term)``.
    """
    dx = x_t - x_next
    drift = (rho / (lam * eta)) ** 2 * float(np.dot(dx, dx))
    err = nu_bar - grad_at_x
    esterr = float(np.dot(err, err))
    return drift + esterr, drift, esterr


def gradient_mapping(x_anchor, x_star, eta):
    return float(np.linalg.norm(x_anchor - x_star)) / eta


def consensus_errors(z_states, nu_states, z_bar=None, nu_bar=None):
    """Sum over clients of squared distances to the client average.

    Pass ``None`` states (traces disabled) to get absent values.
    """
    if z_states is None or nu_states is None:
        return NAN, NAN
    z_states = np.asarray(z_states)
    nu_states = np.asarray(nu_states)
    z_bar = stable_mean(z_states) if z_bar is None else z_bar
    nu_bar = stable_mean(nu_states) if nu_bar is None else nu_bar
    return float(np.sum((z_states - z_bar) ** 2)), float(np.sum((nu_states - nu_bar) ** 2))


def density(x, threshold=0.01):
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x)
    return float(np.mean(np.abs(x) > threshold)) if x.size else 0.0


@dataclass
class RoundDiagnostics:
    """Virtual sequence of one round, built from every client's step history.

    ``z_bar[i]``, ``nu_bar[i]`` average the K client states after ``i`` local
    steps and ``x_tilde[i]`` is the prox of ``z_bar[i]`` at the round anchor.
    """

    round: int
    anchor: np.ndarray
    h: object
    z_bar: np.ndarray
    nu_bar: np.ndarray
    x_tilde: np.ndarray
    grads: np.ndarray
    etas: np.ndarray
    x_clients: np.ndarray
    z_clients: np.ndarray
    nu_clients: np.ndarray


def virtual_round(round_index, anchor, h, lam, constraint, problem, x_hist, z_hist, nu_hist, etas):
    """Build :class:`RoundDiagnostics` from stacked client histories of shape ``(K, I+1, d)``."""
    K, steps, _ = z_hist.shape
    z_bar = np.array([stable_mean(z_hist[:, i]) for i in range(steps)])
    nu_bar = np.array([stable_mean(nu_hist[:, i]) for i in range(steps)])
    x_tilde = np.array([solve_prox(ProxProblem(z, anchor, h, lam, constraint)) for z in z_bar])
    grads = np.array([problem.gradient(x) for x in x_tilde])
    return RoundDiagnostics(round_index, anchor, h, z_bar, nu_bar, x_tilde, grads, np.asarray(etas),
                            x_hist, z_hist, nu_hist)


def round_rows(diag, problem, *, I, rho, lam, constraint, alphas, threshold):
    """One :class:`MetricsRow` per local step of a traced round."""
    rows = []
    z_star = np.zeros_like(diag.anchor)
    for i in range(I):
        eta = float(diag.etas[i])
        g, drift, esterr = measure_gt(diag.x_tilde[i], diag.x_tilde[i + 1], diag.nu_bar[i],
                                      diag.grads[i], eta, rho, lam)
        z_star = z_star - eta * diag.grads[i]
        x_star = solve_prox(ProxProblem(z_star, diag.anchor, diag.h, lam, constraint))
        cz, cnu = consensus_errors(diag.z_clients[:, i], diag.nu_clients[:, i], diag.z_bar[i], diag.nu_bar[i])
        rows.append(MetricsRow(
            t=diag.round * I + i, round=diag.round, loss=problem.loss(diag.x_tilde[i]),
            measure_g=g, term_drift=drift, term_esterr=esterr,
            grad_map=gradient_mapping(diag.anchor, x_star, eta),
            consensus_z=cz, consensus_nu=cnu, density=density(diag.x_tilde[i], threshold),
            eta=eta, alpha=float(alphas[i]),
        ))
    return rows


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or math.isnan(v):
        return ""
    return format(float(v), ".17g")


def emit_csv(rows, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in rows:
                w.writerow([_fmt(v) for v in astuple(r)])
    except OSError as exc:
        raise OSError(f"cannot write metrics CSV {path}: {exc}") from exc


def read_csv(path):
    table = MetricsTable()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for rec in reader:
            vals = [int(rec[0]), int(rec[1])] + [float(v) if v else NAN for v in rec[2:]]
            table.append(MetricsRow(*vals))
    return table


def emit_svg(rows, fields_to_plot, path, width=1000, height=600):
    """Log10-scale line chart of selected columns against the round index."""
    table = rows if isinstance(rows, MetricsTable) else MetricsTable(rows)
    margin = 60
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    series = []
    for name in fields_to_plot:
        rounds = table.column("round")
        vals = table.column(name)
        # one point per round: mean over the round's steps
        pts = []
        for r in np.unique(rounds):
            sel = vals[(rounds == r) & np.isfinite(vals) & (vals > 0)]
            if sel.size:
                pts.append((float(r), math.log10(float(sel.mean()))))
        series.append((name, pts))
    all_pts = [p for _, pts in series for p in pts]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if all_pts:
        xs = [p[0] for p in all_pts]
        ys = [p[1] for p in all_pts]
        x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
        y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
        if y1 == y0:
            y1 = y0 + 1

        def px(x):
            return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

        def py(y):
            return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

        parts.append(f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>')
        parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>')
        for e in range(y0, y1 + 1):
            parts.append(f'<text x="{margin - 8}" y="{py(e) + 4:.1f}" font-size="12" text-anchor="end">1e{e}</text>')
        parts.append(f'<text x="{width / 2}" y="{height - 15}" font-size="13" text-anchor="middle">round</text>')
        for j, (name, pts) in enumerate(series):
            color = colors[j % len(colors)]
            if pts:
                path_d = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
                parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path_d}"/>')
            parts.append(f'<text x="{width - margin - 150}" y="{margin + 18 * j}" font-size="13" fill="{color}">{name}</text>')
    parts.append("</svg>")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SVG {path}: {exc}") from exc

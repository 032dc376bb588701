"""Reference implementations used only as test oracles.

Deliberately naive and written without reusing package internals so that
agreement with the package is meaningful.
"""

import math

import numpy as np


def project_box(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def project_l2(x, center, radius):
    u = x - center
    n = math.sqrt(float(np.sum(u * u)))
    return x.copy() if n <= radius else center + u * (radius / n)


def project_l1(x, center, radius):
    """Euclidean projection onto the L1 ball by Michelot's active-set iteration."""
    u = x - center
    a = np.abs(u)
    if a.sum() <= radius:
        return x.copy()
    active = np.ones(a.size, dtype=bool)
    while True:
        theta = (a[active].sum() - radius) / active.sum()
        keep = active & (a > theta)
        if keep.sum() == active.sum():
            break
        active = keep
    return center + np.sign(u) * np.maximum(a - theta, 0.0)


def projector(kind, **params):
    if kind == "none":
        return lambda x: x.copy()
    if kind == "box":
        return lambda x: project_box(x, params["lo"], params["hi"])
    if kind == "l2":
        return lambda x: project_l2(x, params["center"], params["radius"])
    if kind == "l1":
        return lambda x: project_l1(x, params["center"], params["radius"])
    raise ValueError(kind)


def objective(z, x0, h, lam, x):
    dx = x - x0
    return float(-x @ z + (h * dx) @ dx / (2.0 * lam))


def pgd_prox(z, x0, h, lam, project, iters=800):
    """Accelerated projected gradient on the prox objective."""
    L, mu = h.max() / lam, h.min() / lam
    q = (math.sqrt(L / mu) - 1.0) / (math.sqrt(L / mu) + 1.0)
    x = project(np.array(x0, dtype=float))
    y = x
    for _ in range(iters):
        g = -z + h * (y - x0) / lam
        x_new = project(y - g / L)
        y = x_new + q * (x_new - x)
        x = x_new
    return x


def grid_prox_2d(z, x0, h, lam, member, half_width, n, center=(0.0, 0.0)):
    axes = [np.linspace(center[j] - half_width, center[j] + half_width, n) for j in range(2)]
    pts = np.stack(np.meshgrid(*axes), axis=-1).reshape(-1, 2)
    pts = pts[member(pts)]
    dx = pts - x0
    vals = -pts @ z + (dx * dx) @ h / (2.0 * lam)
    j = int(np.argmin(vals))
    return pts[j], float(vals[j])


def reference_client_loop(x_anchor, nu0, h, lam, etas, grad, alpha):
    """Unconstrained local dual averaging with exact gradients and MVR, one float at a time."""
    z = 0.0
    x = x_anchor
    nu = nu0
    xs, zs, nus = [x], [z], [nu]
    for eta in etas:
        z = z - eta * nu
        x_new = x_anchor + lam * z / h
        nu = grad(x_new) + (1.0 - alpha) * (nu - grad(x))
        x = x_new
        xs.append(x)
        zs.append(z)
        nus.append(nu)
    return xs, zs, nus


def central_difference(f, x, step=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g

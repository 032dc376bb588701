"""Bregman proximal step under a diagonal metric.

Every solver here computes

    argmin_{x in X}  -<x, z> + (1 / 2 lam) (x - x0)^T H (x - x0)

which is the H-weighted projection of ``x0 + lam * H^{-1} z`` onto ``X``.
"""

from dataclasses import dataclass, field

import numpy as np

from fedda.linalg import DiagonalMetric, as_vector

MAX_ITER = 200


class ProxSolverError(RuntimeError):
    """Root finder inside a prox solver failed to converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Unconstrained:
    def contains(self, x, tol=1e-10):
        return bool(np.all(np.isfinite(x)))

    def project(self, x):
        return np.array(x, dtype=np.float64)

    def weighted_project(self, c, h, tol):
        return c


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi in every coordinate")
        object.__setattr__(self, "lo", np.array(lo))
        object.__setattr__(self, "hi", np.array(hi))

    def contains(self, x, tol=1e-10):
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def project(self, x):
        return np.clip(x, self.lo, self.hi)

    def weighted_project(self, c, h, tol):
        # separable: the metric drops out
        return np.clip(c, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class L2Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    def contains(self, x, tol=1e-10):
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def project(self, x):
        u = x - self.center
        n = np.linalg.norm(u)
        if n <= self.radius:
            return np.array(x, dtype=np.float64)
        return self.center + u * (self.radius / n)

    def weighted_project(self, c, h, tol):
        u = c - self.center
        R = self.radius
        norm_u = np.linalg.norm(u)
        if norm_u <= R:
            return c
        if np.all(h == h[0]):
            return self.center + u * (R / norm_u)
        # y(s) = h u / (h + s); find s >= 0 with ||y(s)|| = R.
        # Newton on psi(s) = 1/||y(s)|| - 1/R (nearly linear), bisection fallback.
        lo, hi = 0.0, float(h.max()) * norm_u / R
        s = 0.0
        hu = h * u
        for _ in range(MAX_ITER):
            y = hu / (h + s)
            ny = np.linalg.norm(y)
            if abs(ny - R) <= tol * R:
                return self.center + y * (R / ny)
            psi = 1.0 / ny - 1.0 / R
            if psi < 0:
                lo = s
            else:
                hi = s
            dpsi = np.sum(y * y / (h + s)) / ny**3
            step = s - psi / dpsi if dpsi > 0 else -1.0
            s = step if lo < step < hi else 0.5 * (lo + hi)
        raise ProxSolverError("weighted L2-ball secular equation did not converge", abs(ny - R))


@dataclass(frozen=True, eq=False)
class L1Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    def contains(self, x, tol=1e-10):
        return bool(np.sum(np.abs(x - self.center)) <= self.radius + tol)

    def project(self, x):
        """Euclidean projection by sorting magnitudes."""
        u = x - self.center
        a = np.abs(u)
        if a.sum() <= self.radius:
            return np.array(x, dtype=np.float64)
        srt = np.sort(a)[::-1]
        css = np.cumsum(srt)
        k = np.arange(1, a.size + 1)
        idx = np.nonzero(srt - (css - self.radius) / k > 0)[0][-1]
        theta = (css[idx] - self.radius) / (idx + 1)
        return self.center + np.sign(u) * np.maximum(a - theta, 0.0)

    def weighted_project(self, c, h, tol):
        u = c - self.center
        a = np.abs(u)
        R = self.radius
        if a.sum() <= R:
            return c
        inv_h = 1.0 / h

        def excess(theta):
            return np.sum(np.maximum(a - theta * inv_h, 0.0)) - R

        lo, hi = 0.0, float(np.max(h * a))
        for _ in range(MAX_ITER):
            mid = 0.5 * (lo + hi)
            if excess(mid) > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * max(hi, 1.0):
                break
        else:
            raise ProxSolverError("weighted L1-ball bisection did not converge", excess(0.5 * (lo + hi)))
        theta = 0.5 * (lo + hi)
        # finish exactly on the support identified by bisection
        support = a - theta * inv_h > 0
        if support.any():
            exact = (a[support].sum() - R) / inv_h[support].sum()
            breaks = h * a
            if np.all(breaks[support] >= exact) and np.all(breaks[~support] <= exact * (1 + 1e-12) + 1e-300):
                theta = max(exact, 0.0)
        y = np.sign(u) * np.maximum(a - theta * inv_h, 0.0)
        return self.center + y


@dataclass(frozen=True, eq=False)
class ProxProblem:
    z: np.ndarray
    x0: np.ndarray
    h: DiagonalMetric
    lam: float
    set: object = field(default_factory=Unconstrained)
    tol: float = 1e-12

    def __post_init__(self):
        z = as_vector(self.z, "z")
        x0 = as_vector(self.x0, "x0")
        if z.shape != x0.shape:
            raise ValueError(f"dimension mismatch: z {z.size} vs x0 {x0.size}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x0", x0)


def solve_prox(p):
    h = p.h.effective(p.z.size)
    c = p.x0 + p.lam * p.z / h
    return p.set.weighted_project(c, h, p.tol)


def prox_objective(p, x):
    x = as_vector(x, "x")
    dx = x - p.x0
    return float(-np.dot(x, p.z) + np.dot(p.h.effective(x.size) * dx, dx) / (2.0 * p.lam))


def kkt_residual(p, x, feas_tol=1e-8):
    """Natural-map residual ``||x - P_X(x - grad)||`` of the prox objective.

    Zero exactly when ``x`` solves the variational inequality.
    """
    x = as_vector(x, "x")
    if not p.set.contains(x, feas_tol):
        raise ValueError("kkt_residual needs a feasible point")
    grad = -p.z + p.h.effective(x.size) * (x - p.x0) / p.lam
    return float(np.linalg.norm(x - p.set.project(x - grad)))


def make_constraint(kind, dim, radius=None, center=None, lo=None, hi=None):
    """Build a constraint set from plain config values."""
    kind = kind.lower()
    if kind in ("none", "unconstrained"):
        return Unconstrained()
    ctr = np.zeros(dim) if center is None else np.broadcast_to(np.asarray(center, float), (dim,))
    if kind == "box":
        return Box(np.broadcast_to(np.asarray(lo, float), (dim,)), np.broadcast_to(np.asarray(hi, float), (dim,)))
    if kind == "l2":
        return L2Ball(ctr, float(radius))
    if kind == "l1":
        return L1Ball(ctr, float(radius))
    raise ValueError(f"unknown constraint kind {kind!r}")

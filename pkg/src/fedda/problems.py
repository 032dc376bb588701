"""Client objectives with exact and minibatch gradient oracles, plus data partitioning."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from fedda.linalg import as_vector, stable_mean


class ClientObjective:
    """Finite-sum objective ``f(x) = mean_j f(x; j)`` held by one client."""

    dim: int
    sample_count: int

    def loss(self, x):
        raise NotImplementedError

    def full_gradient(self, x):
        raise NotImplementedError

    def per_sample_gradients(self, x, batch=None):
        raise NotImplementedError

    def lipschitz(self):
        raise NotImplementedError

    def stochastic_gradient(self, x, batch):
        batch = np.asarray(batch, dtype=np.intp)
        if batch.size == 0:
            raise ValueError("empty minibatch")
        if batch.min() < 0 or batch.max() >= self.sample_count:
            raise IndexError("minibatch index out of range")
        return self.per_sample_gradients(x, batch).mean(axis=0)


class Quadratic(ClientObjective):
    """``f(x) = 1/2 x^T A x - b^T x`` with diagonal ``A``.

    Optional ``noise`` rows perturb the linear term per sample; they are
    centered so the sample mean reproduces the exact gradient.
    """

    def __init__(self, A, b, noise=None):
        self.A = as_vector(A, "A")
        self.b = as_vector(b, "b")
        if np.any(self.A < 0):
            raise ValueError("A must be positive semidefinite")
        if self.A.shape != self.b.shape:
            raise ValueError("A and b dimensions differ")
        self.dim = self.A.size
        if noise is None:
            self.noise = np.zeros((1, self.dim))
        else:
            noise = np.asarray(noise, dtype=np.float64)
            self.noise = noise - noise.mean(axis=0)
        self.sample_count = self.noise.shape[0]

    def loss(self, x):
        return float(0.5 * np.dot(self.A * x, x) - np.dot(self.b, x))

    def full_gradient(self, x):
        return self.A * x - self.b

    def per_sample_gradients(self, x, batch=None):
        noise = self.noise if batch is None else self.noise[batch]
        return (self.A * x - self.b) - noise

    def stochastic_gradient(self, x, batch):
        batch = np.asarray(batch, dtype=np.intp)
        if batch.size == 0:
            raise ValueError("empty minibatch")
        return self.A * x - self.b - self.noise[batch].mean(axis=0)

    def lipschitz(self):
        return float(self.A.max())


class LeastSquares(ClientObjective):
    """``f(x) = 1/(2n) ||X x - y||^2``."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (n, d) with matching y")
        self.sample_count, self.dim = self.X.shape

    def loss(self, x):
        r = self.X @ x - self.y
        return float(0.5 * np.mean(r * r))

    def full_gradient(self, x):
        return self.X.T @ (self.X @ x - self.y) / self.sample_count

    def per_sample_gradients(self, x, batch=None):
        X = self.X if batch is None else self.X[batch]
        y = self.y if batch is None else self.y[batch]
        return X * (X @ x - y)[:, None]

    def stochastic_gradient(self, x, batch):
        batch = np.asarray(batch, dtype=np.intp)
        if batch.size == 0:
            raise ValueError("empty minibatch")
        Xb = self.X[batch]
        return Xb.T @ (Xb @ x - self.y[batch]) / batch.size

    def lipschitz(self):
        # per-sample Hessians a a^T have norm ||a||^2 (mean-squared smoothness)
        return float(np.max(np.sum(self.X**2, axis=1)))


class LogisticRegression(ClientObjective):
    """Binary logistic loss with labels in {-1, +1} (0 is mapped to -1)."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.y = np.where(y > 0, 1.0, -1.0)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (n, d) with matching y")
        self.sample_count, self.dim = self.X.shape

    def loss(self, x):
        m = self.y * (self.X @ x)
        return float(np.mean(np.logaddexp(0.0, -m)))

    def _weights(self, X, y, x):
        return -y * expit(-y * (X @ x))

    def full_gradient(self, x):
        return self.X.T @ self._weights(self.X, self.y, x) / self.sample_count

    def per_sample_gradients(self, x, batch=None):
        X = self.X if batch is None else self.X[batch]
        y = self.y if batch is None else self.y[batch]
        return X * self._weights(X, y, x)[:, None]

    def stochastic_gradient(self, x, batch):
        batch = np.asarray(batch, dtype=np.intp)
        if batch.size == 0:
            raise ValueError("empty minibatch")
        Xb, yb = self.X[batch], self.y[batch]
        return Xb.T @ self._weights(Xb, yb, x) / batch.size

    def lipschitz(self):
        return float(0.25 * np.max(np.sum(self.X**2, axis=1)))


class NonconvexRegularizedLogistic(LogisticRegression):
    """Logistic loss plus ``weight * sum x_i^2 / (1 + x_i^2)``."""

    def __init__(self, X, y, weight=0.1):
        super().__init__(X, y)
        self.weight = float(weight)

    def _reg_grad(self, x):
        return self.weight * 2.0 * x / (1.0 + x * x) ** 2

    def loss(self, x):
        return super().loss(x) + float(self.weight * np.sum(x * x / (1.0 + x * x)))

    def full_gradient(self, x):
        return super().full_gradient(x) + self._reg_grad(x)

    def per_sample_gradients(self, x, batch=None):
        return super().per_sample_gradients(x, batch) + self._reg_grad(x)

    def stochastic_gradient(self, x, batch):
        return super().stochastic_gradient(x, batch) + self._reg_grad(x)

    def lipschitz(self):
        # |d^2/dx^2 x^2/(1+x^2)| <= 2, attained at 0
        return super().lipschitz() + 2.0 * self.weight


@dataclass
class FederatedProblem:
    clients: list
    zeta: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if len(self.clients) < 1:
            raise ValueError("a federated problem needs at least one client")
        dims = {c.dim for c in self.clients}
        if len(dims) != 1:
            raise ValueError(f"clients disagree on dimension: {sorted(dims)}")

    @property
    def K(self):
        return len(self.clients)

    @property
    def dim(self):
        return self.clients[0].dim

    def loss(self, x):
        return float(np.mean([c.loss(x) for c in self.clients]))

    def gradient(self, x):
        return stable_mean([c.full_gradient(x) for c in self.clients])

    def lipschitz(self):
        return max(c.lipschitz() for c in self.clients)

    def optimum(self, x0=None):
        """Unconstrained minimizer and minimum of the averaged objective."""
        if all(isinstance(c, Quadratic) for c in self.clients):
            A = np.mean([c.A for c in self.clients], axis=0)
            b = np.mean([c.b for c in self.clients], axis=0)
            x = b / A
            return x, self.loss(x)
        if all(isinstance(c, LeastSquares) for c in self.clients):
            H = sum(c.X.T @ c.X / c.sample_count for c in self.clients) / self.K
            g = sum(c.X.T @ c.y / c.sample_count for c in self.clients) / self.K
            x = np.linalg.lstsq(H, g, rcond=None)[0]
            return x, self.loss(x)
        start = np.zeros(self.dim) if x0 is None else x0
        res = minimize(self.loss, start, jac=self.gradient, method="L-BFGS-B", options={"gtol": 1e-12, "maxiter": 10000})
        return res.x, float(res.fun)


def estimate_constants(prob, probe_points, seed):
    """Return ``(L, sigma, zeta)``; sigma and zeta are maxima over a seeded probe set."""
    if probe_points < 1:
        raise ValueError("need at least one probe point")
    rng = np.random.default_rng(seed)
    probes = [np.zeros(prob.dim)] + [rng.standard_normal(prob.dim) for _ in range(probe_points - 1)]
    sigma2 = 0.0
    zeta = 0.0
    for x in probes:
        grads = []
        for c in prob.clients:
            g = c.full_gradient(x)
            grads.append(g)
            dev = c.per_sample_gradients(x) - g
            sigma2 = max(sigma2, float(np.mean(np.sum(dev * dev, axis=1))))
        grads = np.asarray(grads)
        diff = grads[:, None, :] - grads[None, :, :]
        zeta = max(zeta, float(np.sqrt(np.max(np.sum(diff * diff, axis=2)))))
    return prob.lipschitz(), float(np.sqrt(sigma2)), zeta


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int
    het_fraction: float
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be positive")
        if not 0 < self.het_fraction <= 1:
            raise ValueError("het_fraction must lie in (0, 1]")


def partition_dataset(labels, spec):
    """Split sample indices so client ``c mod K`` owns class ``c``.

    The owner takes ``floor(het_fraction * n_c)`` samples of its class; the
    rest of the class is dealt evenly to the other clients. Returns one sorted
    index array per client.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot partition an empty dataset")
    K = spec.num_clients
    rng = np.random.default_rng(spec.seed)
    parts = [[] for _ in range(K)]
    for pos, cls in enumerate(np.unique(labels)):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        owner = pos % K
        if K == 1:
            parts[0].append(idx)
            continue
        n_own = int(np.floor(spec.het_fraction * idx.size))
        parts[owner].append(idx[:n_own])
        others = [k for k in range(K) if k != owner]
        for k, chunk in zip(others, np.array_split(idx[n_own:], len(others))):
            parts[k].append(chunk)
    return [np.sort(np.concatenate(p)) if p else np.array([], dtype=np.intp) for p in parts]


def load_csv(path):
    """Read ``label,f0,f1,...`` rows into ``(X, y)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise ValueError(f"{path}: first column must be 'label'")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.asarray(rows)
    return data[:, 1:], data[:, 0]


def save_csv(path, X, y):
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{j}" for j in range(X.shape[1])])
        for label, row in zip(y, X):
            w.writerow([repr(float(label))] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# synthetic problem builders used by the harness


def heterogeneous_quadratics(K, dim, seed, curvature=(1.0, 4.0), shift=1.0, shared_curvature=False,
                             noise_std=0.0, samples=1):
    rng = np.random.default_rng(seed)
    A_shared = rng.uniform(*curvature, size=dim)
    center = rng.standard_normal(dim)
    clients = []
    for _ in range(K):
        A = A_shared if shared_curvature else rng.uniform(*curvature, size=dim)
        opt = center + shift * rng.standard_normal(dim)
        noise = noise_std * rng.standard_normal((samples, dim)) if noise_std > 0 else None
        clients.append(Quadratic(A, A * opt, noise))
    return FederatedProblem(clients)


def heterogeneous_least_squares(K, dim, samples, seed, noise_std=0.0, spread=0.5):
    """Clients share a planted solution but see differently scaled features.

    Rows have sign-pattern entries scaled per client, so every row of client
    ``k`` has the same norm and the smoothness constant stays close to the
    curvature of the averaged problem.
    """
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(dim)
    clients = []
    for _ in range(K):
        scale = np.exp(spread * rng.uniform(-1.0, 1.0, size=dim))
        X = rng.choice([-1.0, 1.0], size=(samples, dim)) * scale
        y = X @ x_true + noise_std * rng.standard_normal(samples)
        clients.append(LeastSquares(X, y))
    return FederatedProblem(clients)


def sparse_regression(K, dim, samples, seed, support=0.1, magnitude=0.1, noise_std=0.1):
    rng = np.random.default_rng(seed)
    x_true = np.zeros(dim)
    nnz = max(1, int(round(support * dim)))
    idx = rng.choice(dim, size=nnz, replace=False)
    x_true[idx] = magnitude * rng.choice([-1.0, 1.0], size=nnz)
    clients = []
    for _ in range(K):
        X = rng.standard_normal((samples, dim)) + 0.2 * rng.standard_normal(dim)
        y = X @ x_true + noise_std * rng.standard_normal(samples)
        clients.append(LeastSquares(X, y))
    return FederatedProblem(clients), x_true


def classification_blobs(num_classes, per_class, dim, seed, separation=2.0):
    rng = np.random.default_rng(seed)
    means = separation * rng.standard_normal((num_classes, dim))
    X = np.concatenate([m + rng.standard_normal((per_class, dim)) for m in means])
    y = np.repeat(np.arange(num_classes), per_class)
    return X, y

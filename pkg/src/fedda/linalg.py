"""Dense vector helpers and the diagonal positive-definite metric."""

from dataclasses import dataclass

import numpy as np


def as_vector(values, name="vector"):
    """Return ``values`` as a finite 1-d float64 array (copying only if needed)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_dims(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def axpy(a, x, y):
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    _check_dims(x, y)
    return a * x + y


def stable_mean(vectors):
    """Mean of equal-length vectors, shifted by the first one.

    Identical inputs come back bit-identical, which the homogeneous-collapse
    diagnostics rely on.
    """
    stack = np.asarray(vectors, dtype=np.float64)
    if stack.ndim != 2 or stack.shape[0] == 0:
        raise ValueError("need a non-empty list of equal-length vectors")
    base = stack[0]
    return base + np.mean(stack - base, axis=0)


@dataclass(frozen=True)
class DiagonalMetric:
    """Positive-definite diagonal metric ``H``.

    ``diag`` is either a length-d array (elementwise mode) or a length-1 array
    (scalar times identity). Entries below ``floor`` are raised to it.
    """

    diag: np.ndarray
    floor: float = 1e-12

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError("metric floor must be positive")
        d = np.atleast_1d(np.asarray(self.diag, dtype=np.float64)).copy()
        if d.ndim != 1 or d.size == 0 or not np.all(np.isfinite(d)):
            raise ValueError("metric diagonal must be a finite non-empty vector")
        np.maximum(d, self.floor, out=d)
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    @classmethod
    def identity(cls, floor=1.0):
        return cls(np.array([floor]), floor=floor)

    @classmethod
    def scalar(cls, value, floor=1e-12):
        return cls(np.array([float(value)]), floor=floor)

    @property
    def is_scalar(self):
        return self.diag.size == 1

    def effective(self, dim):
        """Diagonal broadcast to ``dim`` entries."""
        if self.is_scalar:
            return np.full(dim, self.diag[0])
        if self.diag.size != dim:
            raise ValueError(f"dimension mismatch: metric {self.diag.size} vs vector {dim}")
        return self.diag

    def min_eig(self):
        return float(self.diag.min())

    def max_eig(self):
        return float(self.diag.max())

    def __eq__(self, other):
        if not isinstance(other, DiagonalMetric):
            return NotImplemented
        return self.floor == other.floor and np.array_equal(self.diag, other.diag)

    def __hash__(self):
        return hash((self.floor, self.diag.tobytes()))


def metric_apply(h, v):
    v = as_vector(v, "v")
    return h.effective(v.size) * v


def metric_quadratic(h, v):
    v = as_vector(v, "v")
    return float(np.dot(h.effective(v.size) * v, v))


def metric_inverse_apply(h, v):
    v = as_vector(v, "v")
    return v / h.effective(v.size)

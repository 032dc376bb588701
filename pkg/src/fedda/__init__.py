"""Restarted dual averaging for federated adaptive optimization."""

from fedda.linalg import DiagonalMetric, axpy, metric_apply, metric_inverse_apply, metric_quadratic
from fedda.prox import Box, L1Ball, L2Ball, ProxProblem, ProxSolverError, Unconstrained, solve_prox

__version__ = "0.1.0"

__all__ = [
    "DiagonalMetric",
    "axpy",
    "metric_apply",
    "metric_inverse_apply",
    "metric_quadratic",
    "Box",
    "L1Ball",
    "L2Ball",
    "Unconstrained",
    "ProxProblem",
    "ProxSolverError",
    "solve_prox",
]

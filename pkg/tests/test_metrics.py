import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedda.config import ExperimentConfig
from fedda.federation.runner import run_training
from fedda.linalg import DiagonalMetric
from fedda.metrics import (COLUMNS, MetricsRow, MetricsTable, consensus_errors, density, emit_csv, emit_svg,
                           gradient_mapping, measure_gt, read_csv)
from fedda.problems import Quadratic
from fedda.prox import L2Ball, ProxProblem, Unconstrained, solve_prox


def _cfg(**sections):
    base = {"run": {"K": 4, "I": 3, "E": 20, "batch_size": 2, "init_batch": 2},
            "problem": {"kind": "quadratic", "dim": 3, "noise_std": 0.5, "samples": 12},
            "schedule": {"mode": "constant", "eta": 0.003}}
    for k, v in sections.items():
        base.setdefault(k, {}).update(v)
    return ExperimentConfig().with_overrides(**base)


def test_measure_vanishes_at_stationary_point():
    x = np.array([0.5, -1.0])
    g = np.array([0.3, 0.1])
    assert measure_gt(x, x, g, g, 0.1, 0.01, 1.0) == (0.0, 0.0, 0.0)


def test_measure_terms():
    g, drift, err = measure_gt(np.array([1.0, 0.0]), np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                               np.array([0.0, 1.0]), eta=0.5, rho=0.2, lam=2.0)
    assert drift == pytest.approx((0.2 / 1.0) ** 2)
    assert err == 1.0
    assert g == drift + err


def test_measure_bounds_gradient_when_unconstrained():
    res = run_training(_cfg(run={"E": 60}), keep_snapshots=True)
    rho = ExperimentConfig().adaptive.epsilon
    t = res.table
    for snap in res.snapshots:
        h_norm = snap.h_diag.max()
        for i, grad in enumerate(snap.diagnostics.grads[:-1]):
            row = t[snap.round * 3 + i]
            assert float(grad @ grad) <= 2 * h_norm ** 2 / rho ** 2 * row.measure_g * (1 + 1e-12)


def test_gradient_mapping_examples():
    x = np.array([0.3, 0.4])
    assert gradient_mapping(x, x, 0.1) == 0.0
    h = DiagonalMetric([2.0, 5.0])
    grad = np.array([1.0, -3.0])
    for eta in (0.1, 1e-3):
        x_star = solve_prox(ProxProblem(-eta * grad, x, h, 0.7, Unconstrained()))
        assert gradient_mapping(x, x_star, eta) == pytest.approx(np.linalg.norm(0.7 * grad / h.diag), rel=1e-12)


def test_gradient_mapping_vanishes_at_interior_optimum():
    A = np.array([1.0, 2.0, 4.0])
    q = Quadratic(A, A * np.array([0.2, -0.1, 0.3]))
    from fedda.problems import FederatedProblem

    cfg = _cfg(run={"K": 2, "E": 300, "batch_size": 0, "init_batch": 0}, schedule={"eta": 0.003},
               constraint={"kind": "l2", "radius": 1.0})
    gm = run_training(cfg, FederatedProblem([q, q])).table.column("grad_map")
    assert gm[-1] <= 1e-8 * gm[0]


def test_consensus_examples():
    assert all(math.isnan(v) for v in consensus_errors(None, None))
    z = np.zeros((3, 2))
    nu = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    cz, cnu = consensus_errors(z, nu)
    assert cz == 0.0 and cnu == pytest.approx(4.0)


def test_consensus_bound_along_run():
    cfg = _cfg(run={"E": 40, "K": 6, "I": 5})
    t = run_training(cfg).table
    cz, cnu, eta = t.column("consensus_z"), t.column("consensus_nu"), t.column("eta")
    I = 5
    for r in range(40):
        base = r * I
        assert cz[base] == 0.0
        for i in range(1, I):
            bound = (I - 1) * sum(eta[base + l] ** 2 * cnu[base + l] for l in range(i))
            assert cz[base + i] <= bound + 1e-9


def test_density_examples():
    assert density(np.zeros(5)) == 0.0
    assert density(np.array([1.0, 1.0, 1.0, 0.0]), 0.01) == 0.75
    assert density(np.random.default_rng(0).standard_normal(1000), 0.0) == 1.0
    with pytest.raises(ValueError):
        density(np.ones(2), -1.0)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(st.tuples(finite, finite, st.one_of(st.just(float("nan")), finite)), min_size=1, max_size=20))
def test_csv_round_trip(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    rows = [MetricsRow(t=i, round=i // 3, loss=a, measure_g=b, grad_map=c, eta=a) for i, (a, b, c) in enumerate(vals)]
    emit_csv(rows, path)
    back = read_csv(path)
    assert len(back) == len(rows)
    for r, s in zip(rows, back):
        for name in COLUMNS:
            a, b = getattr(r, name), getattr(s, name)
            assert (math.isnan(a) and math.isnan(b)) or a == b


def test_csv_header_and_io_error(tmp_path):
    emit_csv([MetricsRow(0, 0)], tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == ",".join(COLUMNS)
    with pytest.raises(OSError, match="no-such-dir"):
        emit_csv([], tmp_path / "no-such-dir" / "a.csv")


def test_csv_is_deterministic(tmp_path):
    for name in ("a", "b"):
        run_training(_cfg(run={"E": 6}), out_dir=str(tmp_path / name))
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_svg_chart(tmp_path):
    rows = [MetricsRow(t=i, round=i, loss=10.0 ** -i, measure_g=float("nan")) for i in range(5)]
    emit_svg(MetricsTable(rows), ["loss", "measure_g"], tmp_path / "m.svg")
    root = ET.parse(tmp_path / "m.svg").getroot()
    assert root.get("width") == "1000" and root.get("height") == "600"
    text = (tmp_path / "m.svg").read_text()
    assert ">1e0<" in text and ">1e-4<" in text and ">loss<" in text


def test_table_column_rejects_unknown():
    with pytest.raises(KeyError):
        MetricsTable().column("wall_time")

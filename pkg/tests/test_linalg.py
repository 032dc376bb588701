import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedda.linalg import (DiagonalMetric, as_vector, axpy, metric_apply, metric_inverse_apply,
                          metric_quadratic, stable_mean)


@pytest.mark.parametrize("a, x, y, expected", [
    (0.0, (1, 2), (3, 4), (3, 4)),
    (1.0, (1, 2), (0, 0), (1, 2)),
    (-2.0, (1, -1), (1, 1), (-1, 3)),
])
def test_axpy_examples(a, x, y, expected):
    np.testing.assert_array_equal(axpy(a, x, y), expected)


def test_axpy_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        axpy(1.0, [1.0, 2.0], [1.0])


def test_metric_quadratic_examples():
    assert metric_quadratic(DiagonalMetric.identity(1.0), [3, 4]) == 25.0
    assert metric_quadratic(DiagonalMetric([2.0, 2.0]), [1, 1]) == 4.0
    assert metric_quadratic(DiagonalMetric([2.0, 3.0]), [0, 0]) == 0.0


def test_metric_inverse_examples():
    np.testing.assert_array_equal(metric_inverse_apply(DiagonalMetric.identity(), [5, -5]), [5, -5])
    np.testing.assert_array_equal(metric_inverse_apply(DiagonalMetric([2.0, 4.0]), [2, 4]), [1, 1])
    np.testing.assert_array_equal(metric_inverse_apply(DiagonalMetric.scalar(0.5), [1, 0]), [2, 0])


def test_metric_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        metric_apply(DiagonalMetric([1.0, 2.0]), [1.0, 2.0, 3.0])


def test_metric_floor_and_accessors():
    h = DiagonalMetric([0.001, 5.0, 2.0], floor=0.01)
    np.testing.assert_array_equal(h.diag, [0.01, 5.0, 2.0])
    assert h.min_eig() == 0.01
    assert h.max_eig() == 5.0
    with pytest.raises(ValueError):
        h.diag[0] = 3.0


def test_metric_rejects_bad_input():
    with pytest.raises(ValueError):
        DiagonalMetric([1.0, np.nan])
    with pytest.raises(ValueError):
        DiagonalMetric([1.0], floor=0.0)
    with pytest.raises(ValueError):
        DiagonalMetric(np.ones((2, 2)))


def test_scalar_mode_broadcasts():
    h = DiagonalMetric.scalar(3.0)
    assert h.is_scalar
    np.testing.assert_array_equal(h.effective(4), [3.0] * 4)
    assert metric_quadratic(h, [1, 1, 1]) == 9.0


def test_as_vector_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        as_vector([1.0, np.inf])


def test_stable_mean_identical_inputs_bit_exact():
    v = np.array([0.1, 1e-17, -3.3333333333333335, 7e300])
    out = stable_mean([v] * 7)
    assert np.array_equal(out, v)


def test_stable_mean_matches_mean():
    rng = np.random.default_rng(0)
    vs = rng.standard_normal((5, 6))
    np.testing.assert_allclose(stable_mean(vs), vs.mean(axis=0), rtol=1e-14, atol=1e-15)


finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(1e-3, 1e3, allow_nan=False)


@given(st.integers(1, 64).flatmap(lambda d: st.tuples(arrays(np.float64, d, elements=finite),
                                                      arrays(np.float64, d, elements=positive))))
def test_quadratic_bounds(pair):
    v, diag = pair
    eps = 1e-3
    h = DiagonalMetric(diag, floor=eps)
    q = metric_quadratic(h, v)
    n2 = float(v @ v)
    assert eps * n2 * (1 - 1e-12) <= q <= h.max_eig() * n2 * (1 + 1e-12)


def test_apply_inverse_round_trip_1000_instances():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        d = int(rng.integers(1, 65))
        h = DiagonalMetric(np.exp(rng.uniform(-5, 5, size=d)))
        v = rng.standard_normal(d) * 10 ** rng.uniform(-3, 3)
        back = metric_inverse_apply(h, metric_apply(h, v))
        np.testing.assert_allclose(back, v, rtol=1e-12, atol=0)

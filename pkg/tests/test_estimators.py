import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedda.gradient_estimators import (MOMENTUM, MVR, EstimatorRule, GradientPair, alpha_schedule,
                                       init_estimate, update_estimate)
from fedda.problems import LeastSquares


def test_mvr_alpha_one_is_plain_gradient():
    pair = GradientPair(np.array([1.0, -2.0]), np.array([7.0, 7.0]))
    out = update_estimate(EstimatorRule(MVR), np.array([100.0, 3.0]), pair, 1.0)
    np.testing.assert_array_equal(out, [1.0, -2.0])


def test_momentum_alpha_one_is_plain_gradient():
    pair = GradientPair(np.array([1.0, -2.0]), np.array([1.0, -2.0]))
    out = update_estimate(EstimatorRule(MOMENTUM), np.array([100.0, 3.0]), pair, 1.0)
    np.testing.assert_array_equal(out, [1.0, -2.0])


def test_mvr_hand_evaluation():
    pair = GradientPair(np.array([2.0, 2.0]), np.array([1.0, 1.0]))
    out = update_estimate(EstimatorRule(MVR), np.array([1.0, 0.0]), pair, 0.5)
    np.testing.assert_array_equal(out, [2.0, 1.5])


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_alpha_out_of_range(alpha):
    pair = GradientPair(np.ones(2), np.ones(2))
    with pytest.raises(ValueError, match="alpha"):
        update_estimate(EstimatorRule(MVR), np.zeros(2), pair, alpha)


def test_rule_validation():
    with pytest.raises(ValueError):
        EstimatorRule("adam")
    with pytest.raises(ValueError):
        EstimatorRule(MVR, alpha=0.0)
    assert EstimatorRule(MOMENTUM, 0.9).alpha_at(1e6, 0.1) == 0.9
    assert EstimatorRule(MVR).alpha_at(1.0, 0.1) == pytest.approx(0.01)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        update_estimate(EstimatorRule(MVR), np.zeros(3), GradientPair(np.ones(2), np.ones(2)), 0.5)


def test_init_estimate_examples():
    np.testing.assert_array_equal(init_estimate([np.array([1.0, 2.0])]), [1.0, 2.0])
    np.testing.assert_array_equal(init_estimate([np.array([1.0, 1.0]), np.array([3.0, 3.0])]), [2.0, 2.0])
    g = np.array([0.1, 0.7, -1e-9])
    np.testing.assert_array_equal(init_estimate([g] * 10), g)
    with pytest.raises(ValueError):
        init_estimate([])


def test_alpha_schedule_examples():
    assert alpha_schedule(4.0, 0.5) == 1.0
    assert alpha_schedule(1.0, 0.1) == pytest.approx(0.01, rel=1e-15)
    assert alpha_schedule(5e6, 0.01) == 1.0
    with pytest.raises(ValueError):
        alpha_schedule(0.0, 0.1)


def test_gradient_pair_shares_batch():
    rng = np.random.default_rng(0)
    obj = LeastSquares(rng.standard_normal((20, 3)), rng.standard_normal(20))
    batch = np.array([3, 3, 7, 19])
    x_new, x_old = rng.standard_normal(3), rng.standard_normal(3)
    pair = GradientPair.from_batch(obj, x_new, x_old, batch)
    assert pair.batch == (3, 3, 7, 19)
    np.testing.assert_array_equal(pair.g_new, obj.stochastic_gradient(x_new, batch))
    np.testing.assert_array_equal(pair.g_old, obj.stochastic_gradient(x_old, batch))


vec = st.lists(st.floats(-100, 100), min_size=3, max_size=3).map(np.array)


@given(nu=vec, g=vec, alpha=st.floats(0.01, 1.0))
def test_momentum_is_convex_combination(nu, g, alpha):
    out = update_estimate(EstimatorRule(MOMENTUM), nu, GradientPair(g, g), alpha)
    lo, hi = np.minimum(nu, g), np.maximum(nu, g)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


@given(nu=vec, g_new=vec, g_old=vec, alpha=st.floats(0.01, 1.0))
def test_mvr_error_recursion(nu, g_new, g_old, alpha):
    # nu' - g_new = (1 - alpha) (nu - g_old): the estimate error contracts by (1 - alpha)
    out = update_estimate(EstimatorRule(MVR), nu, GradientPair(g_new, g_old), alpha)
    np.testing.assert_allclose(out - g_new, (1 - alpha) * (nu - g_old), atol=1e-9)

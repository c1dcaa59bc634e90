"""Evaluation metrics and the plumbing baselines."""

import numpy as np
import pytest

from modecast.baselines import baseline_linear_ar, baseline_naive
from modecast.metrics import mse, smape


# -- mse ---------------------------------------------------------------------


def test_mse_identity_is_zero():
    x = np.array([1.0, 2.0, 3.0])
    assert mse(x, x) == 0.0


def test_mse_hand_value():
    assert mse(np.array([0.0]), np.array([2.0])) == 4.0


def test_mse_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(1, 200)
        a = rng.normal(size=n) * 10
        p = rng.normal(size=n) * 10
        oracle = sum((ai - pi) ** 2 for ai, pi in zip(a, p)) / n
        assert abs(mse(a, p) - oracle) / max(oracle, 1e-12) < 1e-12


def test_mse_multichannel_averages_over_cells():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    p = np.zeros((2, 2))
    assert mse(a, p) == pytest.approx((1 + 4 + 9 + 16) / 4)


def test_mse_length_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        mse(np.zeros(3), np.zeros(4))


# -- smape -------------------------------------------------------------------


def test_smape_identity_is_zero():
    x = np.array([1.0, -2.0, 3.0])
    assert smape(x, x) == 0.0


def test_smape_hand_value():
    assert smape(np.array([2.0]), np.array([1.0])) == pytest.approx(2.0 / 3.0)


def test_smape_both_zero_contributes_zero():
    assert smape(np.array([0.0, 2.0]), np.array([0.0, 2.0])) == 0.0
    # only the nonzero-pair point contributes
    assert smape(np.array([0.0, 2.0]), np.array([0.0, 1.0])) == pytest.approx(1.0 / 3.0)


def test_smape_bounded():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = rng.integers(1, 100)
        a = rng.normal(size=n) * rng.uniform(0.1, 1000)
        p = rng.normal(size=n) * rng.uniform(0.1, 1000)
        value = smape(a, p)
        assert 0.0 <= value <= 2.0


def test_smape_opposite_signs_hit_upper_bound():
    assert smape(np.array([1.0]), np.array([-1.0])) == 2.0


# -- naive persistence ----------------------------------------------------------


def test_naive_on_constant_series_gives_zero_mse():
    train = np.full(10, 4.2)
    test = np.full(5, 4.2)
    preds = baseline_naive(train, test)
    assert mse(test, preds) == 0.0


def test_naive_uses_true_previous_values():
    preds = baseline_naive(np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0]))
    assert np.array_equal(preds, [3.0, 10.0, 20.0])


def test_naive_next_after_123_is_3():
    preds = baseline_naive(np.array([1.0, 2.0, 3.0]), np.array([99.0]))
    assert preds[0] == 3.0


# -- linear autoregression ---------------------------------------------------------


def test_linear_ar_recovers_exact_ar1():
    # noise-free AR(1): y[t] = 0.9 y[t-1]; coefficients recover exactly
    n = 200
    y = 5.0 * np.power(0.9, np.arange(n))
    preds = baseline_linear_ar(y[:150], 1, y[150:])
    assert np.max(np.abs(preds - y[150:])) < 1e-6


def test_linear_ar_noisy_ar1_residual_matches_noise_variance():
    rng = np.random.default_rng(2)
    n = 4000
    noise = 0.5 * rng.standard_normal(n)
    y = np.zeros(n)
    for t in range(1, n):
        y[t] = 0.8 * y[t - 1] + noise[t]
    train, test = y[:3000], y[3000:]
    preds = baseline_linear_ar(train, 1, test)
    residual_var = mse(test, preds)
    assert residual_var == pytest.approx(0.25, rel=0.15)


def test_linear_ar_degenerate_design_falls_back_to_naive():
    train = np.full(50, 3.0)  # constant history: lag column collinear with intercept
    test = np.array([3.0, 3.0])
    with pytest.warns(UserWarning, match="persistence"):
        preds = baseline_linear_ar(train, 2, test)
    assert np.array_equal(preds, baseline_naive(train, test))


def test_linear_ar_validates_order():
    with pytest.raises(ValueError):
        baseline_linear_ar(np.ones(5), 5, np.ones(2))
    with pytest.raises(ValueError):
        baseline_linear_ar(np.ones(5), 0, np.ones(2))

"""Plumbing baselines for relative comparison against the composite model."""

from __future__ import annotations

import warnings

import numpy as np

__all__ = ["baseline_naive", "baseline_linear_ar"]


def baseline_naive(train: np.ndarray, test: np.ndarray) -> np.ndarray:
    """One-step persistence: each test step predicts the true previous value
    (the last train value for the first step)."""
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if train.size == 0:
        raise ValueError("train history must be nonempty")
    return np.concatenate([train[-1:], test[:-1]])


def baseline_linear_ar(train: np.ndarray, order: int, test: np.ndarray) -> np.ndarray:
    """Least-squares autoregression with intercept, rolled one step at a time
    over the test segment with true history.  A rank-deficient design matrix
    falls back to persistence with a warning."""
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if order < 1:
        raise ValueError("order must be >= 1")
    if order >= train.size:
        raise ValueError(f"order {order} needs more than {train.size} train samples")

    rows = train.size - order
    design = np.ones((rows, order + 1))
    for j in range(order):
        design[:, j + 1] = train[j: j + rows]
    target = train[order:]
    coeffs, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < order + 1:
        warnings.warn(
            "degenerate autoregression design matrix; falling back to persistence",
            stacklevel=2,
        )
        return baseline_naive(train, test)

    history = np.concatenate([train, test])
    preds = np.empty_like(test)
    for i in range(test.size):
        lags = history[train.size + i - order: train.size + i]
        preds[i] = coeffs[0] + float(np.dot(coeffs[1:], lags))
    return preds

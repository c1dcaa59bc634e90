"""Forecast evaluation metrics."""

from __future__ import annotations

import numpy as np

__all__ = ["mse", "smape", "MetricPair", "metric_pair"]

from dataclasses import dataclass


@dataclass(frozen=True)
class MetricPair:
    mse: float
    smape: float  # in [0, 2]


def _check(actual: np.ndarray, predicted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: actual {a.shape} vs predicted {p.shape}")
    if a.size == 0:
        raise ValueError("need at least one observation")
    return a, p


def mse(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Mean squared difference; multi-channel input averages over every cell."""
    a, p = _check(actual, predicted)
    return float(np.mean((a - p) ** 2))


def smape(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Symmetric mean absolute percentage error, (2/n) * sum |a-p| / (|a|+|p|),
    bounded in [0, 2].  Points where both values are zero contribute 0."""
    a, p = _check(actual, predicted)
    denom = np.abs(a) + np.abs(p)
    num = np.abs(a - p)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(2.0 * np.mean(terms))


def metric_pair(actual: np.ndarray, predicted: np.ndarray) -> MetricPair:
    return MetricPair(mse=mse(actual, predicted), smape=smape(actual, predicted))

"""Shared test helpers: finite-difference gradients and error measures."""

from __future__ import annotations

import numpy as np


def rel_err(got: np.ndarray, want: np.ndarray, floor: float = 1e-6) -> float:
    """Max absolute deviation normalized by the oracle's magnitude.

    The floor keeps exactly-zero gradients (e.g. a bias feeding batch norm,
    which cancels per-feature shifts) from dividing finite-difference noise
    (~1e-10 at h=1e-6) by itself.
    """
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(float(np.max(np.abs(want))), floor)
    return float(np.max(np.abs(got - want))) / scale


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued f at x (x is mutated in
    place during probing and restored afterwards)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad

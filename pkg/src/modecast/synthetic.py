"""Synthetic price-like series for fixtures and experiments."""

from __future__ import annotations

import csv
import datetime
from pathlib import Path

import numpy as np

__all__ = ["trend_two_tone", "two_tone", "generate", "write_series_csv"]


def trend_two_tone(
    n: int = 3000,
    seed: int = 7,
    level: float = 100.0,
    trend_per_step: float = 0.01,
    tone_amplitudes: tuple[float, float] = (5.0, 2.0),
    tone_freqs: tuple[float, float] = (0.02, 0.05),
    noise_std: float = 0.3,
) -> np.ndarray:
    """Slow trend plus two tones plus Gaussian noise; a learnable stand-in for
    an index price series."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    values = level + trend_per_step * t
    for amp, freq in zip(tone_amplitudes, tone_freqs):
        values += amp * np.sin(2 * np.pi * freq * t)
    values += noise_std * rng.standard_normal(n)
    return values


def two_tone(n: int = 2000, freqs: tuple[float, float] = (0.01, 0.1),
             amplitudes: tuple[float, float] = (1.0, 0.5)) -> np.ndarray:
    """Noise-free two-tone signal (decomposition fixture)."""
    t = np.arange(n, dtype=np.float64)
    out = np.zeros(n)
    for amp, freq in zip(amplitudes, freqs):
        out += amp * np.sin(2 * np.pi * freq * t)
    return out


_GENERATORS = {
    "trend_two_tone": trend_two_tone,
    "two_tone": two_tone,
}


def generate(spec: dict) -> np.ndarray:
    """Build a series from a config-style mapping: ``{"name": ..., **kwargs}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in _GENERATORS:
        raise ValueError(f"unknown generator {name!r} (available: {sorted(_GENERATORS)})")
    return _GENERATORS[name](**spec)


def write_series_csv(
    path,
    values: np.ndarray,
    column: str = "close",
    start_date: datetime.date = datetime.date(2000, 1, 3),
) -> None:
    """Write a date,value CSV consumable by :func:`modecast.series_io.load_csv`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", column])
        day = start_date
        for v in np.asarray(values, dtype=np.float64):
            writer.writerow([day.isoformat(), repr(float(v))])
            day += datetime.timedelta(days=1)

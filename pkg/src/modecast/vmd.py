"""Variational mode decomposition of a real signal into band-limited modes.

The decomposition jointly estimates K narrow-band components and their center
frequencies by cyclically updating, in the frequency domain, each mode's
spectrum (a Wiener filter centered on its current frequency), each center
frequency (the power centroid of the mode's one-sided spectrum), and a dual
variable that enforces exact reconstruction when the ascent rate is nonzero.

Boundary handling mirrors half the signal onto each end before the transform
and keeps only the center samples afterwards.  All spectra live on the full
unshifted frequency grid of the mirrored signal (axis ``[0, 1)`` cycles per
sample) with support restricted to the positive-frequency half; real modes are
recovered by conjugate-symmetric completion.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "VmdConfig",
    "VmdResult",
    "SpectralBuffer",
    "mirror_extend",
    "dft",
    "idft",
    "update_mode_spectrum",
    "update_omega",
    "update_lambda",
    "converged",
    "decompose",
    "write_decomposition_csv",
    "write_decomposition_metadata",
]


@dataclass(frozen=True)
class VmdConfig:
    """Decomposition settings.

    ``alpha`` is the bandwidth penalty, ``tau`` the dual-ascent rate (0 keeps
    the dual variable frozen, which tolerates a noisy residual), ``tol`` the
    relative-change threshold of the stopping rule, ``omega_init`` one of
    ``uniform``/``zero``/``random``.
    """

    n_modes: int
    alpha: float = 2000.0
    tau: float = 0.0
    tol: float = 1e-7
    max_iter: int = 500
    omega_init: str = "uniform"
    seed: int = 0
    sort_modes: bool = True

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.omega_init not in ("uniform", "zero", "random"):
            raise ValueError(f"unknown omega_init {self.omega_init!r}")

    def to_dict(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "alpha": self.alpha,
            "tau": self.tau,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "omega_init": self.omega_init,
            "seed": self.seed,
            "sort_modes": self.sort_modes,
        }


@dataclass
class VmdResult:
    """Modes (rows, same length as the input), their center frequencies in
    cycles/sample, and convergence telemetry."""

    modes: np.ndarray          # [K, n]
    omegas: np.ndarray         # [K], in [0, 0.5]
    iterations: int
    converged: bool
    final_residual: float
    omega_history: np.ndarray | None = field(repr=False, default=None)  # [iterations, K]

    def reconstruction(self) -> np.ndarray:
        return self.modes.sum(axis=0)


@dataclass
class SpectralBuffer:
    """Frequency-domain workspace for one mirrored signal: the one-sided
    spectrum (upper half zeroed) and its frequency axis, ``[0, 1)`` in steps
    of ``1/len``."""

    spectrum: np.ndarray  # complex, length = mirrored length
    freqs: np.ndarray

    @classmethod
    def from_signal(cls, mirrored: np.ndarray) -> "SpectralBuffer":
        m_len = mirrored.shape[0]
        spectrum = dft(mirrored)
        spectrum[m_len // 2:] = 0.0
        return cls(spectrum=spectrum, freqs=np.arange(m_len) / m_len)

    def __post_init__(self) -> None:
        if self.spectrum.shape != self.freqs.shape:
            raise ValueError("spectrum and frequency axis lengths disagree")


def mirror_extend(signal: np.ndarray) -> np.ndarray:
    """Reflect half the signal onto each end: output length is exactly 2n and
    the center n samples equal the input."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    if x.ndim != 1 or n < 2:
        raise ValueError("mirror_extend needs a 1D signal of length >= 2")
    half = n // 2
    return np.concatenate([x[:half][::-1], x, x[half:][::-1]])


def dft(values: np.ndarray) -> np.ndarray:
    """Discrete Fourier transform, X[k] = sum_t x[t] exp(-2*pi*i*k*t/N)."""
    values = np.asarray(values)
    if values.size < 1:
        raise ValueError("dft needs at least one sample")
    return np.fft.fft(values)

def idft(spectrum: np.ndarray) -> np.ndarray:
    """Inverse transform; idft(dft(x)) == x to floating-point accuracy."""
    spectrum = np.asarray(spectrum)
    if spectrum.size < 1:
        raise ValueError("idft needs at least one bin")
    return np.fft.ifft(spectrum)


def update_mode_spectrum(
    f_hat: np.ndarray,
    lambda_hat: np.ndarray,
    other_modes_sum_hat: np.ndarray,
    omega: float,
    alpha: float,
    freqs: np.ndarray,
) -> np.ndarray:
    """Wiener-filter update of one mode's spectrum around its center frequency:
    (residual + dual/2) / (1 + 2*alpha*(v - omega)^2)."""
    numerator = f_hat - other_modes_sum_hat + lambda_hat / 2.0
    return numerator / (1.0 + 2.0 * alpha * (freqs - omega) ** 2)


def update_omega(mode_spectrum: np.ndarray, freqs: np.ndarray, fallback: float = 0.0) -> float:
    """Power-weighted mean frequency of the one-sided spectrum (bins with
    freq < 0.5).  A zero-power spectrum keeps ``fallback``."""
    half = len(freqs) // 2
    power = np.abs(mode_spectrum[:half]) ** 2
    total = power.sum()
    if total == 0.0:
        return float(fallback)
    return float(np.dot(freqs[:half], power) / total)


def update_lambda(
    lambda_hat: np.ndarray,
    f_hat: np.ndarray,
    modes_sum_hat: np.ndarray,
    tau: float,
) -> np.ndarray:
    """Dual ascent on the reconstruction residual; tau = 0 is a no-op."""
    return lambda_hat + tau * (f_hat - modes_sum_hat)


def converged(
    modes_prev: np.ndarray, modes_next: np.ndarray, tol: float
) -> tuple[bool, float]:
    """Stopping rule: sum over modes of ||next - prev||^2 / ||prev||^2 < tol.

    Modes with zero previous norm are excluded from the sum (dead modes must
    not divide by zero).  Returns (converged, residual).
    """
    if modes_prev.shape != modes_next.shape:
        raise ValueError("iterate shapes disagree")
    residual = 0.0
    for prev, nxt in zip(modes_prev, modes_next):
        denom = float(np.sum(np.abs(prev) ** 2))
        if denom == 0.0:
            continue
        diff = nxt - prev
        residual += float(np.sum(np.abs(diff) ** 2)) / denom
    return residual < tol, residual


def _initial_omegas(config: VmdConfig, n: int) -> np.ndarray:
    k = config.n_modes
    if config.omega_init == "zero":
        return np.zeros(k)
    if config.omega_init == "uniform":
        return 0.5 * np.arange(k) / k
    rng = np.random.default_rng(config.seed)
    lo, hi = math.log(1.0 / n), math.log(0.5)
    return np.sort(np.exp(lo + (hi - lo) * rng.random(k)))


def decompose(signal: np.ndarray, config: VmdConfig) -> VmdResult:
    """Run the full alternating update until the stopping rule fires or the
    iteration cap is reached (hitting the cap is reported, not raised)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("decompose needs a 1D signal")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    n = x.shape[0]
    k = config.n_modes
    if n < 2 * k or n < 2:
        raise ValueError(f"signal too short: {n} samples cannot resolve {k} modes")

    mirrored = mirror_extend(x)
    m_len = mirrored.shape[0]          # 2n, always even
    half = m_len // 2
    workspace = SpectralBuffer.from_signal(mirrored)
    freqs = workspace.freqs            # cycles/sample on [0, 1)
    f_hat_plus = workspace.spectrum    # one-sided support

    omegas = _initial_omegas(config, n)
    lambda_hat = np.zeros(m_len, dtype=np.complex128)
    modes_hat = np.zeros((k, m_len), dtype=np.complex128)

    omega_history = np.zeros((config.max_iter, k))
    iterations = 0
    done = False
    residual = math.inf

    while iterations < config.max_iter and not done:
        prev_modes_hat = modes_hat.copy()
        modes_sum = modes_hat.sum(axis=0)
        for m in range(k):
            others = modes_sum - modes_hat[m]
            updated = update_mode_spectrum(
                f_hat_plus, lambda_hat, others, omegas[m], config.alpha, freqs
            )
            modes_sum += updated - modes_hat[m]   # Gauss-Seidel: next mode sees this one
            modes_hat[m] = updated
            omegas[m] = update_omega(modes_hat[m], freqs, fallback=omegas[m])
        lambda_hat = update_lambda(lambda_hat, f_hat_plus, modes_sum, config.tau)
        omega_history[iterations] = omegas
        iterations += 1
        if iterations >= 2:
            # the first sweep leaves all previous iterates at zero norm, which
            # the stopping rule excludes; comparing from the second sweep on
            done, residual = converged(prev_modes_hat, modes_hat, config.tol)
            if not math.isfinite(residual):
                raise FloatingPointError(
                    f"non-finite convergence residual at iteration {iterations}"
                )

    omega_history = omega_history[:iterations]

    # conjugate-symmetric completion, inverse transform, un-mirror
    modes = np.empty((k, n))
    for m in range(k):
        full = np.zeros(m_len, dtype=np.complex128)
        full[:half] = modes_hat[m, :half]
        full[half + 1:] = np.conj(modes_hat[m, 1:half][::-1])
        time_mode = np.real(idft(full))
        modes[m] = time_mode[n // 2: n // 2 + n]

    if config.sort_modes:
        order = np.argsort(omegas, kind="stable")
        omegas = omegas[order]
        modes = modes[order]
        omega_history = omega_history[:, order]

    return VmdResult(
        modes=modes,
        omegas=np.asarray(omegas),
        iterations=iterations,
        converged=done,
        final_residual=residual,
        omega_history=omega_history,
    )


def write_decomposition_csv(path, modes: np.ndarray) -> None:
    """CSV with header ``t,imf0,...,imf{K-1}``; one row per sample."""
    modes = np.asarray(modes)
    k, n = modes.shape
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"imf{m}" for m in range(k)])
        for t in range(n):
            writer.writerow([t] + [repr(float(v)) for v in modes[:, t]])


def write_decomposition_metadata(path, config: VmdConfig, result: VmdResult) -> None:
    """Sidecar JSON recording the configuration and convergence telemetry."""
    payload = {
        "config": config.to_dict(),
        "omegas": [float(w) for w in result.omegas],
        "iterations": result.iterations,
        "converged": result.converged,
        "final_residual": result.final_residual,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

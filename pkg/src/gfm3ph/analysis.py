"""Post-processing metrics: fundamental phasors, symmetrical components,
unbalance factors, cycle maxima and THD.

Harmonic content of a one-cycle window is obtained by a least-squares fit of
dc plus harmonics 1..nmax. When the window holds an integer number of samples
per period this is exactly the DFT bin projection; at 10 kHz and 60 Hz the
period is 166.67 samples, and the fit keeps harmonics from leaking into each
other.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ALPHA = np.exp(2j * np.pi / 3)
NMAX = 50


class UndefinedFactor(ValueError):
    pass


def window_length(omega0: float, dt: float) -> int:
    return int(round(2 * np.pi / (omega0 * dt)))


@lru_cache(maxsize=32)
def _projector(n: int, omega0: float, dt: float, nmax: int) -> np.ndarray:
    """Rows map a length-n window to [dc, a1, b1, ..., a_nmax, b_nmax]."""
    if 2 * nmax + 1 > n:
        raise ValueError(f"{nmax} harmonics cannot be resolved from {n} samples")
    t = np.arange(n) * dt
    cols = [np.ones(n)]
    for k in range(1, nmax + 1):
        cols += [np.cos(k * omega0 * t), np.sin(k * omega0 * t)]
    B = np.column_stack(cols)
    return np.linalg.pinv(B)


def _default_nmax(n: int) -> int:
    return min(NMAX, (n - 1) // 2 - 1)


def _check(window, omega0, dt):
    window = np.asarray(window, dtype=float)
    n = window_length(omega0, dt)
    if window.shape[-1] != n:
        raise ValueError(f"window must hold {n} samples (one period), got {window.shape[-1]}")
    return window, n


def harmonic_phasors(window, omega0: float, dt: float, nmax: int | None = None) -> np.ndarray:
    """Peak phasors (cosine reference) of harmonics 1..nmax."""
    window, n = _check(window, omega0, dt)
    nmax = _default_nmax(n) if nmax is None else nmax
    coef = window @ _projector(n, omega0, dt, nmax).T
    a = coef[..., 1::2]
    b = coef[..., 2::2]
    return a - 1j * b


def fundamental_phasor(window, omega0: float, dt: float) -> complex:
    return harmonic_phasors(window, omega0, dt)[..., 0]


def sliding_phasors(x, omega0: float, dt: float, nmax: int | None = None) -> np.ndarray:
    """Harmonic phasors of every trailing one-cycle window of ``x``.

    Row k covers samples k .. k+n-1 (so it ends at sample k+n-1).
    """
    x = np.asarray(x, dtype=float)
    n = window_length(omega0, dt)
    if x.shape[-1] < n:
        raise ValueError("series shorter than one period")
    return harmonic_phasors(sliding_window_view(x, n, axis=-1), omega0, dt, nmax)


def fundamental_magnitude_series(x, omega0: float, dt: float, nmax: int | None = None) -> np.ndarray:
    """|fundamental| of the one-cycle window ending at each sample.

    Samples before the first full window repeat the first full-window value.
    """
    x = np.asarray(x, dtype=float)
    n = window_length(omega0, dt)
    mag = np.abs(sliding_phasors(x, omega0, dt, nmax)[..., 0])
    pad = np.repeat(mag[..., :1], n - 1, axis=-1)
    return np.concatenate([pad, mag], axis=-1)


def thd(window, omega0: float, dt: float, nmax: int = NMAX) -> float:
    X = harmonic_phasors(window, omega0, dt, nmax)
    fund = np.abs(X[..., 0])
    if np.any(fund == 0):
        raise UndefinedFactor("THD undefined for zero fundamental")
    return np.sqrt(np.sum(np.abs(X[..., 1:]) ** 2, axis=-1)) / fund


@dataclass
class SequenceSet:
    positive: complex
    negative: complex
    zero: complex


_F = np.array([[1, ALPHA, ALPHA**2], [1, ALPHA**2, ALPHA], [1, 1, 1]]) / 3.0
_F_INV = np.array([[1, 1, 1], [ALPHA**2, ALPHA, 1], [ALPHA, ALPHA**2, 1]])


def sequence_components(pa, pb, pc) -> SequenceSet:
    pos, neg, zero = _F @ np.array([pa, pb, pc], dtype=complex)
    return SequenceSet(complex(pos), complex(neg), complex(zero))


def phase_phasors(seq: SequenceSet) -> np.ndarray:
    return _F_INV @ np.array([seq.positive, seq.negative, seq.zero])


@dataclass
class UnbalanceReport:
    Vuf: float
    Puf: float
    Quf: float
    Pbar: float
    Qbar: float


def unbalance_factors(vph, P, Q) -> UnbalanceReport:
    """Voltage unbalance |V-|/|V+| and max per-phase power deviations from the mean."""
    seq = sequence_components(*vph)
    if abs(seq.positive) <= 1e-12 * np.max(np.abs(vph)):
        raise UndefinedFactor("voltage unbalance factor undefined for zero positive sequence")
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    pbar, qbar = P.mean(), Q.mean()
    return UnbalanceReport(
        Vuf=abs(seq.negative) / abs(seq.positive),
        Puf=float(np.max(np.abs(P - pbar))),
        Quf=float(np.max(np.abs(Q - qbar))),
        Pbar=float(pbar),
        Qbar=float(qbar),
    )


def cycle_max_magnitude(series, omega0: float, dt: float) -> np.ndarray:
    """Trailing one-period rolling maximum along the last axis."""
    x = np.asarray(series, dtype=float)
    n = window_length(omega0, dt)
    if n > x.shape[-1]:
        raise ValueError("window longer than series")
    pad = np.concatenate([np.repeat(x[..., :1], n - 1, axis=-1), x], axis=-1)
    return sliding_window_view(pad, n, axis=-1).max(axis=-1)

"""Discrete-time measurement blocks run at the controller rate.

Everything here works elementwise on floats or on numpy arrays of shape (3,),
so one call can process the three phases at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class InsufficientHistory(RuntimeError):
    """Raised when a delayed sample older than the stored history is requested."""


class PhasorDq(NamedTuple):
    """(d, q) pair in a phase-local rotating frame, i.e. the phasor d + jq."""

    d: np.ndarray | float
    q: np.ndarray | float

    @property
    def magnitude(self):
        return np.hypot(self.d, self.q)

    def to_complex(self):
        return np.asarray(self.d) + 1j * np.asarray(self.q)

    @classmethod
    def from_complex(cls, z) -> "PhasorDq":
        z = np.asarray(z)
        return cls(z.real, z.imag)


class DelayLine:
    """Ring buffer of uniformly spaced samples with fractional-delay reads.

    ``channels`` samples are stored per tick (e.g. one per phase). The buffer
    holds enough history for a quarter period at ``omega_min``.
    """

    def __init__(self, dt: float, omega_min: float, channels: int = 3):
        if dt <= 0 or omega_min <= 0:
            raise ValueError("dt and omega_min must be positive")
        self.dt = dt
        self.omega_min = omega_min
        self.channels = channels
        quarter = 0.5 * math.pi / omega_min
        self.capacity = int(math.ceil(quarter / dt)) + 3
        self._buf = np.zeros((self.capacity, channels))
        self._head = -1  # index of newest sample
        self.count = 0
        self.t_last = None

    def push(self, x, t: float | None = None) -> None:
        self._head = (self._head + 1) % self.capacity
        self._buf[self._head] = x
        self.count = min(self.count + 1, self.capacity)
        if t is None:
            t = 0.0 if self.t_last is None else self.t_last + self.dt
        self.t_last = t

    def fill(self, history) -> None:
        """Push a (n, channels) block of past samples, oldest first."""
        for row in np.atleast_2d(history):
            self.push(row)

    def span(self) -> float:
        return (self.count - 1) * self.dt if self.count else 0.0

    def read_lag(self, lag) -> np.ndarray:
        """Sample ``lag`` seconds before the newest one, linearly interpolated."""
        pos = np.broadcast_to(np.asarray(lag, dtype=float) / self.dt, (self.channels,))
        if self.count == 0 or np.any(pos > self.count - 1 + 1e-9) or np.any(pos < 0):
            raise InsufficientHistory("insufficient history")
        k0 = np.floor(pos).astype(int)
        k0 = np.minimum(k0, self.count - 1)
        frac = pos - k0
        k1 = np.minimum(k0 + 1, self.count - 1)
        ch = np.arange(self.channels)
        x0 = self._buf[(self._head - k0) % self.capacity, ch]
        x1 = self._buf[(self._head - k1) % self.capacity, ch]
        return x0 + frac * (x1 - x0)


def quarter_period(omega):
    return 0.5 * np.pi / np.asarray(omega, dtype=float)


def quadrature(line: DelayLine, omega, t: float | None = None) -> np.ndarray:
    """Quadrature component x(t - T/4) with T = 2*pi/omega.

    A quarter-period delay turns cos(wt) into sin(wt). ``t`` defaults to the
    newest stored sample time.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(~(omega > 0)):
        raise ValueError("omega must be positive")
    if line.t_last is None:
        raise InsufficientHistory("insufficient history")
    back = 0.0 if t is None else line.t_last - t
    if back < -1e-12:
        raise ValueError("t is newer than the newest sample")
    return line.read_lag(back + quarter_period(omega))


def rotate_to_dq(x, x_perp, theta) -> PhasorDq:
    """(x, x_perp) seen in a frame at angle theta; cos/sin(theta) maps to (1, 0)."""
    c = np.cos(theta)
    s = np.sin(theta)
    return PhasorDq(c * x + s * x_perp, -s * x + c * x_perp)


def rotate_from_dq(dq: PhasorDq, theta):
    """Instantaneous value of the phasor ``dq`` at frame angle ``theta``."""
    return np.cos(theta) * dq.d - np.sin(theta) * dq.q


def phase_power(v, v_perp, i, i_perp):
    """Cycle-average P and Q of one phase from peak-scaled quadrature pairs."""
    p = 0.5 * (v * i + v_perp * i_perp)
    q = 0.5 * (v_perp * i - v * i_perp)
    return p, q


def notch_coefficients(center: float, quality: float, dt: float):
    """Biquad notch (bilinear design) normalised so that a[0] == 1."""
    w0 = center * dt
    if not (0.0 < w0 < math.pi) or quality <= 0:
        raise ValueError(
            f"notch center {center} rad/s is not realisable at dt={dt} (quality={quality})"
        )
    alpha = math.sin(w0) / (2.0 * quality)
    cw = math.cos(w0)
    a0 = 1.0 + alpha
    b = (1.0 / a0, -2.0 * cw / a0, 1.0 / a0)
    a = (1.0, -2.0 * cw / a0, (1.0 - alpha) / a0)
    # poles of z^2 + a1 z + a2
    if abs(a[2]) >= 1.0:
        raise ValueError("unstable notch coefficients")
    return b, a


@dataclass
class NotchState:
    """Direct-form-I notch filter state; elementwise over the channel axis.

    The center may be retuned before every step (it follows 2*omega of the
    owning phase).
    """

    center: float | np.ndarray
    quality: float = 2.0
    dt: float = 1e-4
    x1: np.ndarray | None = None
    x2: np.ndarray | None = None
    y1: np.ndarray | None = None
    y2: np.ndarray | None = None

    def __post_init__(self):
        for c in np.atleast_1d(self.center):
            notch_coefficients(float(c), self.quality, self.dt)

    def coefficients(self):
        centers = np.asarray(self.center, dtype=float)
        w0 = centers * self.dt
        if np.any(w0 <= 0) or np.any(w0 >= np.pi):
            raise ValueError("notch center outside (0, pi/dt)")
        alpha = np.sin(w0) / (2.0 * self.quality)
        cw = np.cos(w0)
        a0 = 1.0 + alpha
        return (1.0 / a0, -2.0 * cw / a0, 1.0 / a0), (-2.0 * cw / a0, (1.0 - alpha) / a0)


def notch_step(state: NotchState, u, dt: float | None = None):
    if dt is not None and abs(dt - state.dt) > 1e-15:
        raise ValueError("notch was designed for a different step")
    u = np.asarray(u, dtype=float)
    if state.x1 is None:
        # start from the dc steady state of the first sample
        state.x1 = state.x2 = state.y1 = state.y2 = u.copy()
    (b0, b1, b2), (a1, a2) = state.coefficients()
    y = b0 * u + b1 * state.x1 + b2 * state.x2 - a1 * state.y1 - a2 * state.y2
    state.x2, state.x1 = state.x1, u
    state.y2, state.y1 = state.y1, y
    return y


@dataclass
class PiState:
    """PI block kp*e + ki*int(e). ``method`` is "tustin" or "euler".

    ``clamp`` (optional) bounds both the integrator and the output.
    """

    kp: float
    ki: float
    clamp: float | None = None
    method: str = "tustin"
    integrator: np.ndarray | float = field(default=0.0)

    def reset(self):
        self.integrator = np.zeros_like(np.asarray(self.integrator, dtype=float))


def pi_step(state: PiState, e, dt: float):
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = np.asarray(e, dtype=float)
    old = state.integrator
    new = old + state.ki * e * dt
    if state.clamp is not None:
        new = np.clip(new, -state.clamp, state.clamp)
    if state.method == "tustin":
        integral = 0.5 * (old + new)
    elif state.method == "euler":
        integral = old
    else:
        raise ValueError(f"unknown PI discretisation {state.method!r}")
    state.integrator = new
    out = state.kp * e + integral
    if state.clamp is not None:
        out = np.clip(out, -state.clamp, state.clamp)
    return out

"""Grid-forming control at the controller rate.

``GeneralizedController`` runs one droop law, one dual-loop voltage/current
controller and one current limiter per phase, with the phase-balancing
feedback coupling the three droop laws. ``StandardController`` is the usual
positive-sequence dual-loop droop control in a single dq frame, kept as the
baseline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import (
    DelayLine,
    InsufficientHistory,
    NotchState,
    PhasorDq,
    PiState,
    notch_step,
    phase_power,
    pi_step,
    quadrature,
    rotate_from_dq,
    rotate_to_dq,
)
from .phases import PHASE_OFFSETS

THETA_BAL = PHASE_OFFSETS
# actuation happens one period after sampling and is held for one period
ACTUATION_LEAD = 1.5


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), 2.0 * np.pi)


def _three(x) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=float), (3,)).copy()


@dataclass
class DroopParams:
    omega0: float = 2.0 * np.pi * 60.0
    mP: float = 0.05
    mQ: float = 0.05
    tau: float = 0.05
    ks: float = 1e5
    Pstar: np.ndarray = field(default_factory=lambda: np.zeros(3))
    Qstar: np.ndarray = field(default_factory=lambda: np.zeros(3))
    Vstar: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.Pstar, self.Qstar, self.Vstar = map(_three, (self.Pstar, self.Qstar, self.Vstar))
        if not (self.mP > 0 and self.mQ > 0 and self.tau > 0 and self.omega0 > 0):
            raise ValueError("droop gains, tau and omega0 must be positive")
        if not self.ks >= 0:
            raise ValueError("ks must be nonnegative")
        if np.any(self.Vstar < 0):
            raise ValueError("voltage setpoints must be nonnegative")


@dataclass
class DroopState:
    delta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vdelta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray | None = None

    def copy(self) -> "DroopState":
        return DroopState(self.delta.copy(), self.vdelta.copy(),
                          None if self.omega is None else self.omega.copy())


def droop_rhs(delta, P, params: DroopParams) -> np.ndarray:
    """Per-unit angle rate of each phase for the current angles and powers."""
    delta = np.asarray(delta, dtype=float)
    balancing = params.ks * (3.0 * delta - delta.sum())
    return 1.0 - balancing + params.mP * (params.Pstar - P)


def _balance(increment, offset, k):
    """Increment of x' = x + inc - k*L x' where L is the 3-phase Laplacian.

    Solved in closed form: the common mode is untouched and the differential
    mode shrinks by 1/(1+3k). ``offset`` is x minus its mean.
    """
    c = 3.0 * k / (1.0 + 3.0 * k)
    dev = offset + (increment - increment.mean())
    return increment - c * dev


def droop_step(state: DroopState, P, Q, params: DroopParams, dt: float):
    """Advance the per-phase droop laws by one controller period.

    The balancing terms are integrated implicitly (a ks of 1e5 p.u. is far too
    stiff for explicit Euler at 10 kHz); everything else is explicit Euler.
    With ks = 0 this is exactly explicit Euler and the phases are independent.

    Returns (new state, theta_gfm, V_gfm, omega_gfm).
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    w0 = params.omega0
    inc = dt * w0 * (1.0 + params.mP * (params.Pstar - P))
    d_inc = _balance(inc, state.delta - state.delta.mean(), dt * w0 * params.ks)
    delta = state.delta + d_inc
    v_inc = (dt / params.tau) * (-state.vdelta + params.mQ * (params.Qstar - Q))
    vdelta = state.vdelta + _balance(v_inc, state.vdelta - state.vdelta.mean(),
                                     dt * params.ks / params.tau)
    vdelta = np.maximum(vdelta, -params.Vstar)
    omega = d_inc / dt
    new = DroopState(delta, vdelta, omega)
    return new, wrap_angle(delta + THETA_BAL), vdelta + params.Vstar, omega


@dataclass
class InnerParams:
    Yf: np.ndarray = field(default_factory=lambda: np.array([[0.0, -0.05], [0.05, 0.0]]))
    Zf: np.ndarray = field(default_factory=lambda: np.array([[0.01, -0.1], [0.1, 0.01]]))
    kp_v: float = 0.1
    ki_v: float = 15.0
    kp_i: float = 0.7
    ki_i: float = 1.2
    Imax: float = 1.2
    clamp: float | None = None
    pi_method: str = "tustin"
    # hold the voltage-loop integrator of a phase while its current is limited
    conditional_integration: bool = True

    def __post_init__(self):
        self.Yf = np.asarray(self.Yf, dtype=float).reshape(2, 2)
        self.Zf = np.asarray(self.Zf, dtype=float).reshape(2, 2)
        if not self.Imax > 0:
            raise ValueError("Imax must be positive")
        if not (np.all(np.isfinite(self.Yf)) and np.all(np.isfinite(self.Zf))):
            raise ValueError("feedforward matrices must be finite")

    @classmethod
    def from_filter(cls, r_f: float, x_f: float, b_f: float, **kw) -> "InnerParams":
        """dq cross-coupling feedforward of the LC filter at nominal frequency."""
        return cls(Yf=[[0.0, -b_f], [b_f, 0.0]], Zf=[[r_f, -x_f], [x_f, r_f]], **kw)

    def voltage_pi(self) -> PiState:
        return PiState(self.kp_v, self.ki_v, self.clamp, self.pi_method, 0.0)

    def current_pi(self) -> PiState:
        return PiState(self.kp_i, self.ki_i, self.clamp, self.pi_method, 0.0)


def _mat(M, x: PhasorDq) -> PhasorDq:
    return PhasorDq(M[0, 0] * x.d + M[0, 1] * x.q, M[1, 0] * x.d + M[1, 1] * x.q)


def voltage_loop_step(v_dq: PhasorDq, v_gfm_dq: PhasorDq, io_dq: PhasorDq, pi: PiState,
                      params: InnerParams, dt: float) -> PhasorDq:
    """Filter current reference: output current + Yf v + PI(voltage error)."""
    u = pi_step(pi, np.stack([np.asarray(v_gfm_dq.d) - v_dq.d,
                              np.asarray(v_gfm_dq.q) - v_dq.q]), dt)
    y = _mat(params.Yf, v_dq)
    return PhasorDq(io_dq.d + y.d + u[0], io_dq.q + y.q + u[1])


def hold_integrator(pi: PiState, previous, limiting) -> None:
    """Undo this step's integration wherever the current limiter is active."""
    pi.integrator = np.where(limiting, previous, pi.integrator)


def limit_current(i_ref: PhasorDq, Imax: float) -> PhasorDq:
    """Saturate the phasor magnitude at Imax, keeping its angle."""
    mag = np.hypot(i_ref.d, i_ref.q)
    scale = Imax / np.maximum(mag, Imax)
    if np.ndim(scale) == 0:
        scale = float(scale)
    return PhasorDq(i_ref.d * scale, i_ref.q * scale)


def current_loop_step(i_dq: PhasorDq, i_lim_dq: PhasorDq, v_dq: PhasorDq, pi: PiState,
                      params: InnerParams, dt: float) -> PhasorDq:
    """Modulated voltage: terminal voltage + Zf i + PI(current error)."""
    u = pi_step(pi, np.stack([np.asarray(i_lim_dq.d) - i_dq.d,
                              np.asarray(i_lim_dq.q) - i_dq.q]), dt)
    z = _mat(params.Zf, i_dq)
    return PhasorDq(v_dq.d + z.d + u[0], v_dq.q + z.q + u[1])


@dataclass
class ControllerOutputs:
    vsw: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    V_gfm: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    i_ref_mag: np.ndarray
    limiting: np.ndarray
    closed_loop: bool = True


class GeneralizedController:
    """Per-phase grid-forming droop with phase balancing and dual-loop control."""

    def __init__(self, droop: DroopParams, inner: InnerParams, dt: float = 1e-4,
                 notch_quality: float = 2.0, omega_min_factor: float = 0.5,
                 delta0: float = 0.0):
        self.droop = droop
        self.inner = inner
        self.dt = dt
        self.omega_min = omega_min_factor * droop.omega0
        self.state = DroopState(np.full(3, float(delta0)), np.zeros(3),
                                np.full(3, droop.omega0))
        self.lines = {k: DelayLine(dt, self.omega_min, 3) for k in ("v", "i", "io")}
        self.notch_p = NotchState(2 * droop.omega0, notch_quality, dt)
        self.notch_q = NotchState(2 * droop.omega0, notch_quality, dt)
        self.pi_v = inner.voltage_pi()
        self.pi_i = inner.current_pi()
        self.ticks = 0

    def step(self, v, i, io) -> ControllerOutputs:
        dt, st, dp = self.dt, self.state, self.droop
        self.lines["v"].push(v)
        self.lines["i"].push(i)
        self.lines["io"].push(io)
        self.ticks += 1
        theta = wrap_angle(st.delta + THETA_BAL)
        omega = np.maximum(st.omega, self.omega_min)
        V_gfm = st.vdelta + dp.Vstar
        try:
            v_perp = quadrature(self.lines["v"], omega)
            i_perp = quadrature(self.lines["i"], omega)
            io_perp = quadrature(self.lines["io"], omega)
        except InsufficientHistory:
            # open loop until a quarter period of history exists
            vsw = V_gfm * np.cos(theta + ACTUATION_LEAD * omega * dt)
            self.state, _, _, _ = droop_step(st, dp.Pstar, dp.Qstar, dp, dt)
            zero = np.zeros(3)
            return ControllerOutputs(vsw, dp.Pstar.copy(), dp.Qstar.copy(), V_gfm, theta,
                                     st.omega.copy(), zero, np.zeros(3, bool), False)
        v_dq = rotate_to_dq(v, v_perp, theta)
        i_dq = rotate_to_dq(i, i_perp, theta)
        io_dq = rotate_to_dq(io, io_perp, theta)
        p_raw, q_raw = phase_power(v, v_perp, i, i_perp)
        self.notch_p.center = self.notch_q.center = 2.0 * omega
        P = notch_step(self.notch_p, p_raw)
        Q = notch_step(self.notch_q, q_raw)

        held = np.array(self.pi_v.integrator, dtype=float, copy=True)
        i_ref = voltage_loop_step(v_dq, PhasorDq(V_gfm, np.zeros(3)), io_dq, self.pi_v,
                                  self.inner, dt)
        i_mag = i_ref.magnitude
        if self.inner.conditional_integration:
            hold_integrator(self.pi_v, held, i_mag > self.inner.Imax)
        i_lim = limit_current(i_ref, self.inner.Imax)
        vsw_dq = current_loop_step(i_dq, i_lim, v_dq, self.pi_i, self.inner, dt)
        vsw = rotate_from_dq(vsw_dq, theta + ACTUATION_LEAD * omega * dt)
        self.state, _, _, _ = droop_step(st, P, Q, dp, dt)
        return ControllerOutputs(vsw, P, Q, V_gfm, theta, st.omega.copy(), i_mag,
                                 i_mag > self.inner.Imax)


def controller_step(controller, v, i, io) -> ControllerOutputs:
    return controller.step(v, i, io)


_ALPHA = np.exp(-1j * THETA_BAL)


def park(x_abc, theta) -> PhasorDq:
    """Amplitude-invariant Park transform (peak phasor of the positive sequence)."""
    z = (2.0 / 3.0) * np.dot(_ALPHA, np.asarray(x_abc, dtype=float)) * np.exp(-1j * theta)
    return PhasorDq(z.real, z.imag)


def inverse_park(dq: PhasorDq, theta) -> np.ndarray:
    return rotate_from_dq(dq, theta + THETA_BAL)


class StandardController:
    """Positive-sequence droop with dual-loop control in one dq frame."""

    def __init__(self, droop: DroopParams, inner: InnerParams, dt: float = 1e-4,
                 notch_quality: float = 2.0, delta0: float = 0.0):
        self.droop = droop
        self.inner = inner
        self.dt = dt
        self.delta = float(delta0)
        self.vdelta = 0.0
        self.omega = droop.omega0
        self.Pstar = float(droop.Pstar.mean())
        self.Qstar = float(droop.Qstar.mean())
        self.Vstar = float(droop.Vstar.mean())
        self.notch_p = NotchState(2 * droop.omega0, notch_quality, dt)
        self.notch_q = NotchState(2 * droop.omega0, notch_quality, dt)
        self.pi_v = inner.voltage_pi()
        self.pi_i = inner.current_pi()

    def step(self, v, i, io) -> ControllerOutputs:
        dt, dp = self.dt, self.droop
        theta = float(wrap_angle(self.delta))
        v_dq, i_dq, io_dq = park(v, theta), park(i, theta), park(io, theta)
        p_raw = 0.5 * (v_dq.d * i_dq.d + v_dq.q * i_dq.q)
        q_raw = 0.5 * (v_dq.q * i_dq.d - v_dq.d * i_dq.q)
        omega = max(self.omega, 0.5 * dp.omega0)
        self.notch_p.center = self.notch_q.center = 2.0 * omega
        P = float(notch_step(self.notch_p, p_raw))
        Q = float(notch_step(self.notch_q, q_raw))
        V_gfm = self.vdelta + self.Vstar

        held = np.array(self.pi_v.integrator, dtype=float, copy=True)
        i_ref = voltage_loop_step(v_dq, PhasorDq(V_gfm, 0.0), io_dq, self.pi_v, self.inner, dt)
        if self.inner.conditional_integration:
            hold_integrator(self.pi_v, held, float(i_ref.magnitude) > self.inner.Imax)
        i_lim = limit_current(i_ref, self.inner.Imax)
        vsw_dq = current_loop_step(i_dq, i_lim, v_dq, self.pi_i, self.inner, dt)
        vsw = inverse_park(vsw_dq, theta + ACTUATION_LEAD * omega * dt)

        omega_prev = self.omega
        self.omega = dp.omega0 * (1.0 + dp.mP * (self.Pstar - P))
        self.delta += dt * self.omega
        self.vdelta += (dt / dp.tau) * (-self.vdelta + dp.mQ * (self.Qstar - Q))
        self.vdelta = max(self.vdelta, -self.Vstar)
        i_mag = float(i_ref.magnitude)
        three = np.ones(3)
        return ControllerOutputs(vsw, P * three, Q * three, V_gfm * three,
                                 wrap_angle(theta + THETA_BAL), omega_prev * three,
                                 i_mag * three, np.full(3, i_mag > self.inner.Imax))


def standard_droop_step(controller: StandardController, v, i, io) -> ControllerOutputs:
    return controller.step(v, i, io)

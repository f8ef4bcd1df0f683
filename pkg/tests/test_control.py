import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfm3ph import analysis
from gfm3ph.control import (
    THETA_BAL,
    DroopParams,
    DroopState,
    GeneralizedController,
    InnerParams,
    StandardController,
    current_loop_step,
    hold_integrator,
    droop_rhs,
    droop_step,
    inverse_park,
    limit_current,
    park,
    voltage_loop_step,
    wrap_angle,
)
from gfm3ph.dsp import PhasorDq, PiState

W0 = 2 * np.pi * 60
DT = 1e-4
ZERO_FF = dict(Yf=np.zeros((2, 2)), Zf=np.zeros((2, 2)))


# -- droop -------------------------------------------------------------------

def test_droop_equilibrium_is_uniform_rotation():
    p = DroopParams(ks=3.0)
    st0 = DroopState(np.full(3, 0.2), np.zeros(3))
    new, theta, V, omega = droop_step(st0, p.Pstar, p.Qstar, p, DT)
    assert np.allclose(omega, W0, rtol=0, atol=1e-9)
    assert np.allclose(new.delta, 0.2 + W0 * DT)
    assert np.array_equal(new.vdelta, np.zeros(3))
    assert np.allclose(V, 1.0)
    assert np.allclose(theta, wrap_angle(new.delta + THETA_BAL))


def test_droop_rhs_hand_evaluation():
    p = DroopParams(ks=1.0)
    rate = droop_rhs([0.01, 0.0, 0.0], p.Pstar, p)
    assert rate == pytest.approx([1 - 0.02, 1 + 0.01, 1 + 0.01])


def test_droop_ks_zero_is_explicit_euler():
    p = DroopParams(ks=0.0, Pstar=[0.1, 0.2, 0.3], Qstar=[0.0, -0.1, 0.1])
    st0 = DroopState(np.array([0.1, -0.2, 0.3]), np.array([0.01, 0.0, -0.02]))
    P, Q = np.array([0.0, 0.25, 0.2]), np.array([0.05, 0.0, 0.0])
    new, _, V, omega = droop_step(st0, P, Q, p, DT)
    rate = W0 * droop_rhs(st0.delta, P, p)
    assert np.allclose(new.delta, st0.delta + DT * rate, rtol=0, atol=1e-15)
    v_exp = st0.vdelta + DT / p.tau * (-st0.vdelta + p.mQ * (p.Qstar - Q))
    assert np.allclose(new.vdelta, v_exp, rtol=0, atol=1e-15)
    assert np.allclose(omega, rate)


def test_droop_ks_zero_decoupling_bit_identical():
    p = DroopParams(ks=0.0)
    rng = np.random.default_rng(1)
    a = DroopState(np.zeros(3), np.zeros(3))
    b = a.copy()
    for _ in range(10_000):
        P, Q = rng.normal(0, 0.1, 3), rng.normal(0, 0.1, 3)
        Pb, Qb = P.copy(), Q.copy()
        Pb[1] += rng.normal(0, 0.5)
        Qb[1] += rng.normal(0, 0.5)
        a, *_ = droop_step(a, P, Q, p, DT)
        b, *_ = droop_step(b, Pb, Qb, p, DT)
    for k in (0, 2):
        assert a.delta[k] == b.delta[k] and a.vdelta[k] == b.vdelta[k]
    assert a.delta[1] != b.delta[1]


def test_droop_balanced_fixed_point():
    p = DroopParams(ks=10.0)
    s = DroopState(np.full(3, 0.3), np.zeros(3))
    for _ in range(2000):
        s, theta, V, _ = droop_step(s, p.Pstar, p.Qstar, p, DT)
    assert np.ptp(s.delta) == 0.0
    vph = V * np.exp(1j * theta)
    assert abs(analysis.sequence_components(*vph).negative) < 1e-12


def test_droop_large_ks_locks_phases():
    p = DroopParams(ks=1e5)
    s = DroopState(np.zeros(3), np.zeros(3))
    P = np.array([0.3, -0.2, 0.1])
    for _ in range(500):
        s, *_ = droop_step(s, P, np.zeros(3), p, DT)
    mean_rate = W0 * (1 + p.mP * (p.Pstar - P).mean())
    assert np.ptp(s.delta) < 1e-5
    assert s.omega.mean() == pytest.approx(mean_rate, rel=1e-9)


@settings(max_examples=30)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3), st.floats(0, 100))
def test_droop_phase_permutation_equivariance(P, Q, delta, ks):
    # a cyclic shift of the phases with their balancing offsets permutes the outputs
    p = DroopParams(ks=ks)
    s = DroopState(np.array(delta), np.zeros(3))
    roll = lambda x: np.roll(np.asarray(x), 1)
    a, th_a, V_a, w_a = droop_step(s, P, Q, p, DT)
    b, th_b, V_b, w_b = droop_step(DroopState(roll(delta), np.zeros(3)), roll(P), roll(Q), p, DT)
    assert np.allclose(roll(a.delta), b.delta, atol=1e-12)
    assert np.allclose(roll(V_a), V_b, atol=1e-12)
    assert np.allclose(roll(w_a), w_b, atol=1e-6)
    # theta differs only through the per-phase balancing offsets
    shift = wrap_angle(th_b - roll(th_a) - (THETA_BAL - roll(THETA_BAL)))
    assert np.allclose(shift, 0, atol=1e-9)


def test_droop_voltage_floor():
    p = DroopParams(ks=0.0, tau=1e-3)
    s = DroopState(np.zeros(3), np.zeros(3))
    for _ in range(200):
        s, _, V, _ = droop_step(s, np.zeros(3), np.full(3, 100.0), p, DT)
    assert np.all(V >= 0)


def test_droop_params_validation():
    for bad in (dict(mP=0), dict(mQ=-1), dict(tau=0), dict(ks=-1), dict(Vstar=[-1, 1, 1])):
        with pytest.raises(ValueError):
            DroopParams(**bad)


# -- inner loops -------------------------------------------------------------

def test_voltage_loop_examples():
    ip = InnerParams(kp_v=0.3, ki_v=10.0, **ZERO_FF)
    out = voltage_loop_step(PhasorDq(1.0, 0.0), PhasorDq(1.0, 0.0), PhasorDq(0.2, -0.1),
                            ip.voltage_pi(), ip, DT)
    assert out == (pytest.approx(0.2), pytest.approx(-0.1))
    ip = InnerParams(kp_v=1.0, ki_v=0.0, **ZERO_FF)
    out = voltage_loop_step(PhasorDq(0.9, 0.0), PhasorDq(1.0, 0.0), PhasorDq(0.2, 0.0),
                            ip.voltage_pi(), ip, DT)
    assert out.d == pytest.approx(0.3) and out.q == pytest.approx(0.0)


def test_voltage_loop_admittance_feedforward():
    ip = InnerParams.from_filter(0.01, 0.1, 0.05)
    Yf = np.array([[0, -0.05], [0.05, 0]])
    assert np.array_equal(ip.Yf, Yf)
    out = voltage_loop_step(PhasorDq(1.0, 0.0), PhasorDq(1.0, 0.0), PhasorDq(0.0, 0.0),
                            ip.voltage_pi(), ip, DT)
    assert np.allclose([out.d, out.q], Yf @ [1.0, 0.0])


def test_current_loop_examples():
    ip = InnerParams(Zf=np.array([[0.01, -0.1], [0.1, 0.01]]), Yf=np.zeros((2, 2)))
    out = current_loop_step(PhasorDq(1.0, 0.0), PhasorDq(1.0, 0.0), PhasorDq(0.0, 0.0),
                            ip.current_pi(), ip, DT)
    assert np.allclose([out.d, out.q], [0.01, 0.1])
    ip = InnerParams(kp_i=2.0, ki_i=0.0, **ZERO_FF)
    out = current_loop_step(PhasorDq(0.0, 0.05), PhasorDq(0.0, 0.0), PhasorDq(1.0, 0.0),
                            ip.current_pi(), ip, DT)
    assert np.allclose([out.d, out.q], [1.0, -0.1])


def test_limiter_examples():
    assert limit_current(PhasorDq(0.5, 0.0), 1.2) == (0.5, 0.0)
    assert limit_current(PhasorDq(2.4, 0.0), 1.2) == (pytest.approx(1.2), 0.0)
    d, q = limit_current(PhasorDq(3.0, 4.0), 1.2)
    assert (d, q) == (pytest.approx(0.72), pytest.approx(0.96))


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0.01, 10))
def test_limiter_contract(d, q, Imax):
    out = limit_current(PhasorDq(d, q), Imax)
    assert np.hypot(out.d, out.q) <= Imax * (1 + 1e-12) or np.hypot(d, q) <= Imax
    if np.hypot(d, q) > 1e-9:
        assert abs(wrap_angle(np.arctan2(out.q, out.d) - np.arctan2(q, d))) < 1e-9
    if np.hypot(d, q) <= Imax:
        assert out == (d, q)


def test_limiter_vectorised():
    out = limit_current(PhasorDq(np.array([0.1, 3.0, 0.0]), np.array([0.0, 4.0, 0.0])), 1.2)
    assert np.allclose(out.d, [0.1, 0.72, 0.0]) and np.allclose(out.q, [0.0, 0.96, 0.0])


def test_hold_integrator_only_on_limited_phases():
    pi = PiState(0.1, 1.0, integrator=np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    hold_integrator(pi, np.zeros((2, 3)), np.array([False, True, False]))
    assert np.array_equal(pi.integrator, [[1.0, 0.0, 3.0], [4.0, 0.0, 6.0]])


@pytest.mark.parametrize("conditional", [True, False])
def test_voltage_integrator_winds_up_only_without_conditional_integration(conditional):
    # phase b sags to half voltage while drawing 1.5 p.u.: its current reference
    # sits above Imax, phases a and c see no error
    ip = InnerParams.from_filter(0.01, 0.1, 0.05, kp_v=0.3, ki_v=5.0, Imax=1.2,
                                 conditional_integration=conditional)
    ctrl = GeneralizedController(DroopParams(ks=1e5), ip, DT)
    scale = np.array([1.0, 0.5, 1.0])
    for k in range(2000):
        th = W0 * k * DT + THETA_BAL
        out = ctrl.step(scale * np.cos(th), np.zeros(3), np.array([0.0, 1.5, 0.0]) * np.cos(th))
    assert out.limiting[1] and not out.limiting[[0, 2]].any()
    wound = np.hypot(*ctrl.pi_v.integrator)
    if conditional:
        assert wound[1] < 0.05
    else:
        # ki_v * error * time once the loop closes after a quarter period
        closed = 2000 * DT - 0.25 / 60
        assert wound[1] == pytest.approx(5.0 * 0.5 * closed, rel=2e-2)


def test_inner_params_validation():
    with pytest.raises(ValueError):
        InnerParams(Imax=0.0)
    with pytest.raises(ValueError):
        InnerParams(Yf=[[np.inf, 0], [0, 0]])


# -- Park --------------------------------------------------------------------

@given(st.floats(0.1, 2), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_park_round_trip_balanced(mag, phi, theta):
    dq = PhasorDq(mag * np.cos(phi), mag * np.sin(phi))
    x = inverse_park(dq, theta)
    back = park(x, theta)
    assert np.allclose([back.d, back.q], [dq.d, dq.q], atol=1e-12)


# -- controllers at equilibrium ----------------------------------------------

def _ideal_terminal(k, V=1.0, w=W0):
    th = w * k * DT + THETA_BAL
    return V * np.cos(th)


def test_generalized_controller_balanced_no_load():
    ctrl = GeneralizedController(DroopParams(ks=1e5), InnerParams.from_filter(0.01, 0.1, 0.05), DT)
    zero = np.zeros(3)
    for k in range(3000):
        out = ctrl.step(_ideal_terminal(k), zero, zero)
    assert out.closed_loop
    assert np.allclose(out.P, 0, atol=1e-3) and np.allclose(out.Q, 0, atol=1e-3)
    assert not out.limiting.any()
    assert np.allclose(out.omega, W0, rtol=1e-4)
    assert np.ptp(wrap_angle(out.theta - THETA_BAL)) < 1e-6


def test_generalized_controller_opens_loop_without_history():
    ctrl = GeneralizedController(DroopParams(), InnerParams(), DT)
    out = ctrl.step(np.ones(3), np.zeros(3), np.zeros(3))
    assert not out.closed_loop
    assert np.all(np.isfinite(out.vsw))


def test_standard_controller_balanced_no_load():
    ctrl = StandardController(DroopParams(), InnerParams.from_filter(0.01, 0.1, 0.05), DT)
    zero = np.zeros(3)
    for k in range(3000):
        out = ctrl.step(_ideal_terminal(k), zero, zero)
    assert np.allclose(out.P, 0, atol=1e-3) and np.allclose(out.Q, 0, atol=1e-3)
    assert np.allclose(out.V_gfm, 1.0, atol=1e-3)
    assert not out.limiting.any()


def test_pi_state_from_inner_params():
    ip = InnerParams(kp_v=0.2, ki_v=3.0, kp_i=0.9, ki_i=5.0, clamp=2.0)
    assert ip.voltage_pi() == PiState(0.2, 3.0, 2.0, "tustin", 0.0)
    assert ip.current_pi() == PiState(0.9, 5.0, 2.0, "tustin", 0.0)

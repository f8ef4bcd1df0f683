"""Co-simulation of plant and controller, and the two case studies."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .control import (
    ACTUATION_LEAD,
    DroopParams,
    GeneralizedController,
    InnerParams,
    StandardController,
)
from .dsp import DelayLine, InsufficientHistory, phase_power, quadrature
from .network import (
    ConfigurationError,
    LoadParams,
    NetworkParams,
    SimulationAbort,
    SwitchEvent,
    advance,
    assemble,
    open_circuit_terminal,
    phasor_state,
    settle_after_switch,
)
from .phases import PHASE_OFFSETS

logger = logging.getLogger(__name__)

CONTROLLERS = ("generalized", "standard")
DEFAULT_KS_GRID = (0.0, 0.1, 1.0, 10.0, 100.0, 1e3, 1e5)


@dataclass
class ControlConfig:
    mP: float = 0.05
    mQ: float = 0.05
    tau: float = 0.05
    ks: float = 1e5
    Pstar: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    Qstar: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    Vstar: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    Imax: float = 1.2
    kp_v: float = 0.324
    ki_v: float = 0.23
    kp_i: float = 1.204
    ki_i: float = 5.96
    anti_windup_clamp: float | None = None
    conditional_integration: bool = True
    notch_quality: float = 2.0
    rate_hz: float = 10_000.0


@dataclass
class ScenarioConfig:
    network: NetworkParams = field(default_factory=NetworkParams)
    control: ControlConfig = field(default_factory=ControlConfig)
    controller: str = "generalized"
    events: list = field(default_factory=list)
    duration: float = 2.0
    plant_dt: float = 1e-5
    outputs: list | None = None
    seed: int = 0

    @property
    def control_dt(self) -> float:
        return 1.0 / self.control.rate_hz

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.plant_dt))

    def validate(self) -> None:
        self.network.validate()
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"controller must be one of {CONTROLLERS}")
        if not (self.duration > 0 and self.plant_dt > 0 and self.control.rate_hz > 0):
            raise ConfigurationError("duration, plant_dt and controller rate must be positive")
        k = self.control_dt / self.plant_dt
        if abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise ConfigurationError("controller period must be an integer multiple of plant_dt")
        n = self.duration * self.control.rate_hz
        if abs(n - round(n)) > 1e-6:
            raise ConfigurationError("duration must be a whole number of controller periods")
        times = [e.time for e in self.events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ConfigurationError("events must be strictly ordered in time")
        if times and (times[0] < 0 or times[-1] >= self.duration):
            raise ConfigurationError("duration must exceed the largest event time")
        c = self.control
        if not (c.mP > 0 and c.mQ > 0 and c.tau > 0 and c.ks >= 0 and c.Imax > 0):
            raise ConfigurationError("need mP, mQ, tau, Imax > 0 and ks >= 0")
        if not isinstance(c.conditional_integration, bool):
            raise ConfigurationError("conditional_integration must be true or false")
        for name in ("Pstar", "Qstar", "Vstar"):
            if len(getattr(c, name)) != 3:
                raise ConfigurationError(f"{name} needs one value per phase")

    def droop_params(self) -> DroopParams:
        c = self.control
        return DroopParams(self.network.omega0, c.mP, c.mQ, c.tau, c.ks,
                           np.array(c.Pstar, float), np.array(c.Qstar, float),
                           np.array(c.Vstar, float))

    def inner_params(self) -> InnerParams:
        c, n = self.control, self.network
        return InnerParams.from_filter(n.r_f, n.x_f, n.b_f, kp_v=c.kp_v, ki_v=c.ki_v,
                                       kp_i=c.kp_i, ki_i=c.ki_i, Imax=c.Imax,
                                       clamp=c.anti_windup_clamp,
                                       conditional_integration=c.conditional_integration)


CHANNELS = ("v", "i", "io", "vsw", "V", "I", "P", "Q", "lim", "omega", "theta", "V_gfm",
            "P_ctrl", "Q_ctrl", "i_ref")


@dataclass
class RunRecord:
    t: np.ndarray
    channels: dict
    config: ScenarioConfig
    aborted: bool = False
    message: str = ""
    summary: dict = field(default_factory=dict)

    def __getattr__(self, name):
        channels = self.__dict__.get("channels", {})
        if name in channels:
            return channels[name]
        raise AttributeError(name)

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return self.config.control_dt

    def index(self, t: float) -> int:
        return int(round(t / self.dt))

    def window(self, name: str, t_end: float | None = None, cycles: float = 1.0) -> np.ndarray:
        """(3, n) one-cycle block of a channel ending at ``t_end`` (default: last sample)."""
        n = analysis.window_length(self.config.network.omega0, self.dt)
        n = int(round(n * cycles)) if cycles != 1.0 else n
        end = len(self.t) if t_end is None else self.index(t_end) + 1
        return self.channels[name][end - n:end].T


class PhaseMeter:
    """Per-phase phasor magnitudes and powers of the recorded channels."""

    def __init__(self, dt: float, omega_min: float):
        self.v = DelayLine(dt, omega_min)
        self.i = DelayLine(dt, omega_min)

    def update(self, v, i, omega):
        self.v.push(v)
        self.i.push(i)
        try:
            vp = quadrature(self.v, omega)
            ip = quadrature(self.i, omega)
        except InsufficientHistory:
            z = np.zeros(3)
            return z, z, z, z
        P, Q = phase_power(v, vp, i, ip)
        return np.hypot(v, vp), np.hypot(i, ip), P, Q


def _make_controller(config: ScenarioConfig, delta0: float):
    c = config.control
    if config.controller == "generalized":
        return GeneralizedController(config.droop_params(), config.inner_params(),
                                     config.control_dt, c.notch_quality, delta0=delta0)
    return StandardController(config.droop_params(), config.inner_params(), config.control_dt,
                              c.notch_quality, delta0=delta0)


def run_scenario(config: ScenarioConfig) -> RunRecord:
    """Simulate ``config``; deterministic for a given config."""
    config.validate()
    model = assemble(config.network)
    dt_c, h, K = config.control_dt, config.plant_dt, config.substeps
    N = int(round(config.duration / dt_c))
    w0 = config.network.omega0

    # start in the open-loop steady state, aligned with the unloaded terminal
    delta0 = float(np.angle(open_circuit_terminal(model)[0]))
    vstar = np.array(config.control.Vstar, float)
    e_sw = vstar * np.exp(1j * (delta0 + PHASE_OFFSETS))
    state = phasor_state(model, e_sw, 0.0)
    controller = _make_controller(config, delta0)
    meter = PhaseMeter(dt_c, 0.5 * w0)
    pending = vstar * np.cos(delta0 + PHASE_OFFSETS + 0.5 * w0 * dt_c)

    events = sorted(config.events, key=lambda e: e.time)
    ev_steps = [int(round(e.time / h)) for e in events]
    ev_next = 0

    rec = {name: np.zeros((N + 1, 3)) for name in CHANNELS}
    rec["lim"] = np.zeros((N + 1, 3), dtype=bool)
    t = np.arange(N + 1) * dt_c
    aborted, message, last = False, "", N
    for k in range(N + 1):
        m = model.measure(state)
        try:
            out = controller.step(m.v, m.i, m.io)
        except ValueError as exc:  # e.g. a diverged frequency estimate
            aborted, message, last = True, f"controller failed at t={t[k]:.6f}: {exc}", k - 1
            break
        if not np.all(np.isfinite(out.vsw)):
            aborted, message, last = True, f"non-finite controller output at t={t[k]:.6f}", k - 1
            break
        V, I, P, Q = meter.update(m.v, m.i, np.maximum(out.omega, 0.5 * w0))
        row = {"v": m.v, "i": m.i, "io": m.io, "vsw": pending, "V": V, "I": I, "P": P, "Q": Q,
               "lim": out.limiting, "omega": out.omega, "theta": out.theta, "V_gfm": out.V_gfm,
               "P_ctrl": out.P, "Q_ctrl": out.Q, "i_ref": out.i_ref_mag}
        for name, val in row.items():
            rec[name][k] = val
        if k == N:
            break
        try:
            step0 = k * K
            done = 0
            while ev_next < len(events) and ev_steps[ev_next] < step0 + K:
                n_pre = max(ev_steps[ev_next] - step0 - done, 0)
                state = advance(model, state, pending, h, n_pre)
                done += n_pre
                model.apply_event(events[ev_next], state)
                ev_next += 1
                if done < K:
                    state = settle_after_switch(model, state, pending, h)
                    done += 1
            state = advance(model, state, pending, h, K - done)
        except SimulationAbort as exc:
            aborted, message, last = True, str(exc), k
            break
        pending = out.vsw
    if aborted:
        logger.error("run aborted: %s", message)
        t = t[: last + 1]
        rec = {name: arr[: last + 1] for name, arr in rec.items()}
    if config.outputs:
        rec = {name: arr for name, arr in rec.items() if name in config.outputs}
    return RunRecord(t, rec, config, aborted, message)


# ---------------------------------------------------------------------------
# steady-state evaluation


def steady_state_report(record: RunRecord, t_end: float | None = None) -> analysis.UnbalanceReport:
    """Unbalance factors from the last cycle of terminal voltage and meter powers."""
    w0 = record.config.network.omega0
    vw = record.window("v", t_end)
    vph = analysis.fundamental_phasor(vw, w0, record.dt)
    P = record.window("P", t_end).mean(axis=1)
    Q = record.window("Q", t_end).mean(axis=1)
    return analysis.unbalance_factors(vph, P, Q)


def is_steady(record: RunRecord, tol: float = 1e-4) -> bool:
    """Last two cycles give unbalance factors within ``tol`` of each other."""
    period = 2 * math.pi / record.config.network.omega0
    a = steady_state_report(record)
    b = steady_state_report(record, record.t[-1] - period)
    return all(abs(x - y) <= tol for x, y in
               zip((a.Vuf, a.Puf, a.Quf), (b.Vuf, b.Puf, b.Quf)))


def run_to_steady_state(config: ScenarioConfig, max_extensions: int = 2, tol: float = 1e-4):
    record = run_scenario(config)
    tries = 0
    while not record.aborted and not is_steady(record, tol) and tries < max_extensions:
        logger.warning("not steady after %.1f s; extending", config.duration)
        config = replace(config, duration=config.duration + 1.0)
        record = run_scenario(config)
        tries += 1
    return record, (not record.aborted) and is_steady(record, tol)


# ---------------------------------------------------------------------------
# studies


# the voltage-loop integrator settles the last few 1e-6 of Vuf slowly; 2 s
# leaves a residue that reorders the high-ks rows of the sweep
SWEEP_DURATION = 5.0


def unbalanced_load_config(base: ScenarioConfig | None = None,
                           duration: float = SWEEP_DURATION) -> ScenarioConfig:
    base = base or ScenarioConfig()
    load = replace(base.network.load, enabled=True, scale_bc=0.8, scale_ca=1.2)
    return replace(base, network=replace(base.network, load=load), events=[],
                   duration=duration)


@dataclass
class SweepRow:
    ks: float
    Vuf: float
    Puf: float
    Quf: float
    converged: bool
    P: tuple = ()
    Q: tuple = ()


def _sweep_point(args) -> SweepRow:
    base, ks = args
    cfg = replace(base, control=replace(base.control, ks=float(ks)))
    try:
        record, ok = run_to_steady_state(cfg)
        rep = steady_state_report(record)
    except (SimulationAbort, ValueError) as exc:
        logger.error("sweep point ks=%g failed: %s", ks, exc)
        return SweepRow(float(ks), math.nan, math.nan, math.nan, False)
    P = tuple(record.window("P").mean(axis=1))
    Q = tuple(record.window("Q").mean(axis=1))
    return SweepRow(float(ks), rep.Vuf, rep.Puf, rep.Quf, ok, P, Q)


def sweep_workers() -> int:
    env = os.environ.get("GFM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ks_sweep(base: ScenarioConfig, ks_values=DEFAULT_KS_GRID, workers: int | None = None) -> list[SweepRow]:
    """Steady-state unbalance factors with the unbalanced load, one run per ks."""
    if not base.network.load.enabled:
        raise ConfigurationError("ks_sweep needs the unbalanced delta load enabled")
    ks_values = sorted(float(k) for k in ks_values)
    workers = sweep_workers() if workers is None else workers
    jobs = [(base, ks) for ks in ks_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    return sorted(rows, key=lambda r: r.ks)


FAULT_TIME = 1.5
FAULT_CYCLES = 10
RECOVERY_VUF = 1e-2


def fault_config(base: ScenarioConfig | None = None, controller: str = "generalized",
                 duration: float = 3.0) -> ScenarioConfig:
    base = base or ScenarioConfig()
    t_clear = FAULT_TIME + FAULT_CYCLES / base.network.f0
    net = replace(base.network, load=replace(base.network.load, enabled=False))
    events = [SwitchEvent(FAULT_TIME, "fault_on", "hv1", "a"),
              SwitchEvent(t_clear, "breaker_open", "hv1")]
    return replace(base, network=net, controller=controller, events=events,
                   duration=duration, control=replace(base.control, ks=1e5))


def fault_summary(record: RunRecord) -> dict:
    cfg = record.config
    w0, dt = cfg.network.omega0, record.dt
    n = analysis.window_length(w0, dt)
    t_fault = next(e.time for e in cfg.events if e.kind == "fault_on")
    t_clear = next(e.time for e in cfg.events if e.kind == "breaker_open")
    k0 = record.index(t_fault) + n  # one cycle after inception
    k1 = int(math.floor(t_clear / dt - 1e-9))  # last sample before the breaker opens
    # cycle max of the one-cycle fundamental phasor magnitude of each phase current
    i_mag = analysis.fundamental_magnitude_series(record.i.T, w0, dt)
    cyc_max = analysis.cycle_max_magnitude(i_mag, w0, dt)
    i_max = cyc_max[:, k0:k1 + 1].max(axis=1)
    # fundamental voltage magnitude of every full cycle inside the fault window
    v_mag = analysis.fundamental_magnitude_series(record.v.T, w0, dt)
    v_min = v_mag[:, record.index(t_fault) + n:k1 + 1].min(axis=1)
    # THD over whole cycles from one cycle after inception up to clearing
    ncyc = (k1 - k0 + 1) // n
    blocks = [record.v[k0 + j * n:k0 + (j + 1) * n].T for j in range(ncyc)]
    thd_phase = np.mean([analysis.thd(b, w0, dt) for b in blocks], axis=0)
    H = np.array([analysis.harmonic_phasors(b, w0, dt, analysis.NMAX) for b in blocks])
    thd_total = float(np.mean(np.sqrt(np.sum(np.abs(H[..., 1:]) ** 2, axis=(1, 2)) /
                                      np.sum(np.abs(H[..., 0]) ** 2, axis=1))))
    # recovery: time after clearing until the one-cycle V_UF stays below 1e-2
    ph = analysis.sliding_phasors(record.v.T, w0, dt)[..., 0]
    vuf = np.abs(analysis._F[1] @ ph) / np.maximum(np.abs(analysis._F[0] @ ph), 1e-12)
    vuf = np.concatenate([np.full(n - 1, vuf[0]), vuf])  # aligned to window end
    after = np.arange(k1 + 1, len(vuf))
    bad = after[vuf[after] >= RECOVERY_VUF]
    last_bad = bad.max() if bad.size else k1
    recov = (last_bad + 1) * dt - t_clear if last_bad + 1 < len(vuf) else None
    return {
        "t_fault": t_fault,
        "t_clear": t_clear,
        "cycle_max_current": i_max.tolist(),
        "cycle_max_current_overall": float(i_max.max()),
        "cycle_min_fundamental_voltage": v_min.tolist(),
        "deepest_sag_phase": "abc"[int(np.argmin(v_min))],
        "thd_per_phase": np.asarray(thd_phase).tolist(),
        "thd_total": thd_total,
        "recovery_time": recov,
        "final_vuf": float(vuf[-1]),
    }


def slg_fault_study(base: ScenarioConfig | None = None, controller: str = "generalized",
                    duration: float = 3.0) -> tuple[RunRecord, dict]:
    record = run_scenario(fault_config(base, controller, duration))
    record.summary = fault_summary(record) if not record.aborted else {"aborted": record.message}
    return record, record.summary

"""Fixed-step EMT plant: averaged VSC with LC filter feeding the test network.

The network is a linear circuit of

* inductive branches  ``L di/dt = a.v - R i + s.u``  whose incidence vector
  ``a`` may carry arbitrary coefficients (this is how the ideal transformer
  coupling of a leakage branch to a delta winding is written),
* shunt capacitors from nodes to ground,
* conductances between nodes (fault, bleed),

with KCL ``A i + G v + i_C = 0`` at every node. Each element is discretised
with its own trapezoidal companion model (nodal EMT formulation), so nodes
without capacitance are fine. All quantities are per-unit with peak-valued
phase bases; time is in seconds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .phases import PHASE_OFFSETS, PHASES

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
INPUTS = ("vsw_a", "vsw_b", "vsw_c", "grid_a", "grid_b", "grid_c")


class ConfigurationError(ValueError):
    pass


class AssemblyError(RuntimeError):
    pass


class SimulationAbort(RuntimeError):
    pass


@dataclass
class Branch:
    name: str
    coeffs: dict  # node name -> coefficient of that node voltage
    r: float
    x: float  # reactance at the base frequency, per-unit
    source: tuple | None = None  # (input name, sign)
    group: str | None = None


@dataclass
class Conductance:
    name: str
    coeffs: dict
    g: float
    group: str | None = None


class Circuit:
    """Mutable list of circuit elements. ``omega_base`` converts reactances."""

    def __init__(self, omega_base: float):
        self.omega_base = omega_base
        self.nodes: list[str] = []
        self.branches: list[Branch] = []
        self.caps: dict[str, float] = {}
        self.conductances: list[Conductance] = []

    def add_node(self, name: str) -> str:
        if name not in self.nodes:
            self.nodes.append(name)
        return name

    def add_branch(self, name, coeffs, r, x, source=None, group=None) -> Branch:
        if r < 0 or x <= 0:
            raise ConfigurationError(f"branch {name}: need r >= 0 and x > 0 (got r={r}, x={x})")
        for node in coeffs:
            if node not in self.nodes:
                raise ConfigurationError(f"branch {name}: unknown node {node}")
        b = Branch(name, dict(coeffs), float(r), float(x), source, group)
        self.branches.append(b)
        return b

    def add_cap(self, node: str, b: float) -> None:
        if b <= 0:
            raise ConfigurationError(f"capacitor at {node}: susceptance must be > 0 (got {b})")
        self.caps[node] = self.caps.get(node, 0.0) + b

    def add_conductance(self, name, coeffs, g, group=None) -> Conductance:
        if g < 0:
            raise ConfigurationError(f"conductance {name} must be >= 0")
        c = Conductance(name, dict(coeffs), float(g), group)
        self.conductances.append(c)
        return c

    def remove_conductance(self, name: str) -> bool:
        before = len(self.conductances)
        self.conductances = [c for c in self.conductances if c.name != name]
        return len(self.conductances) != before

    def groups(self) -> set:
        return {b.group for b in self.branches if b.group} | {
            c.group for c in self.conductances if c.group
        }


# ---------------------------------------------------------------------------
# test system


@dataclass
class LoadParams:
    enabled: bool = False
    r_ab: float = 4.0
    x_ab: float = 2.0
    scale_bc: float = 0.8
    scale_ca: float = 1.2


@dataclass
class NetworkParams:
    f0: float = 60.0
    s_base_mva: float = 1.0
    v_lv_kv: float = 0.48
    v_mv_kv: float = 13.8
    v_hv_kv: float = 138.0
    r_f: float = 0.01
    x_f: float = 0.1
    b_f: float = 0.05
    mv_length_km: float = 1.0
    mv_r_ohm_km: float = 0.1
    mv_x_ohm_km: float = 0.3
    hv_length_km: float = 10.0
    hv_r_ohm_km: float = 0.03
    hv_x_ohm_km: float = 0.3
    xfmr_r: float = 0.005
    xfmr_x: float = 0.06
    scr: float = 3.0
    grid_xr: float = 10.0
    grid_v: float = 1.0
    grid_df_hz: float = 0.0
    fault_r: float = 1e-4
    load: LoadParams = field(default_factory=LoadParams)

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f0

    @property
    def omega_grid(self) -> float:
        return 2.0 * math.pi * (self.f0 + self.grid_df_hz)

    def z_base(self, v_kv: float) -> float:
        return v_kv**2 / self.s_base_mva

    def mv_line_z(self) -> complex:
        zb = self.z_base(self.v_mv_kv)
        return self.mv_length_km * complex(self.mv_r_ohm_km, self.mv_x_ohm_km) / zb

    def hv_line_z(self) -> complex:
        zb = self.z_base(self.v_hv_kv)
        return self.hv_length_km * complex(self.hv_r_ohm_km, self.hv_x_ohm_km) / zb

    def grid_z(self) -> complex:
        """Thevenin impedance giving the requested SCR at the VSC terminal."""
        zsc = (1.0 / self.scr) * complex(1.0, self.grid_xr) / abs(complex(1.0, self.grid_xr))
        series = 2 * complex(self.xfmr_r, self.xfmr_x) + self.mv_line_z() + self.hv_line_z() / 2
        z = zsc - series
        if z.real < 0 or z.imag <= 0:
            raise ConfigurationError(
                f"SCR {self.scr} is not reachable: series impedance {series:.4f} exceeds {zsc:.4f}"
            )
        return z

    def validate(self) -> None:
        positive = {
            "f0": self.f0, "s_base_mva": self.s_base_mva, "v_lv_kv": self.v_lv_kv,
            "v_mv_kv": self.v_mv_kv, "v_hv_kv": self.v_hv_kv, "x_f": self.x_f,
            "b_f": self.b_f, "xfmr_x": self.xfmr_x, "scr": self.scr, "fault_r": self.fault_r,
            "grid_xr": self.grid_xr,
        }
        for k, val in positive.items():
            if not val > 0:
                raise ConfigurationError(f"{k} must be > 0 (got {val})")
        nonneg = {
            "r_f": self.r_f, "xfmr_r": self.xfmr_r, "mv_length_km": self.mv_length_km,
            "hv_length_km": self.hv_length_km, "mv_r_ohm_km": self.mv_r_ohm_km,
            "mv_x_ohm_km": self.mv_x_ohm_km, "hv_r_ohm_km": self.hv_r_ohm_km,
            "hv_x_ohm_km": self.hv_x_ohm_km, "grid_v": self.grid_v,
        }
        for k, val in nonneg.items():
            if not val >= 0:
                raise ConfigurationError(f"{k} must be >= 0 (got {val})")
        if self.hv_length_km == 0 or self.hv_x_ohm_km == 0:
            raise ConfigurationError("the HV circuits need a nonzero reactance")
        if self.mv_length_km > 0 and self.mv_x_ohm_km == 0:
            raise ConfigurationError("MV line needs a nonzero reactance")
        ld = self.load
        if ld.r_ab < 0 or ld.x_ab <= 0 or ld.scale_bc <= 0 or ld.scale_ca <= 0:
            raise ConfigurationError("load impedances must be passive with x > 0")
        self.grid_z()


BUSES = {"lv": "T", "mv1": "M1", "mv2": "M2", "hv": "H1", "grid": "H2"}
LINES = ("mv", "hv1", "hv2")


def _prev(p: str) -> str:
    return PHASES[(PHASES.index(p) - 1) % 3]


def build_test_system(params: NetworkParams) -> Circuit:
    """VSC filter - LV bus - Yg/D step-up - MV line - Yg/D step-up - 2x HV line - grid.

    Both step-up transformers have the delta on the high-voltage side and the
    low-voltage side lagging by 30 degrees.
    """
    params.validate()
    c = Circuit(params.omega0)
    mv_present = params.mv_length_km > 0
    node = {}
    for bus in ("T", "M1", "M2", "H1", "H2"):
        for p in PHASES:
            if bus == "M1" and not mv_present:
                node[bus + p] = node["M2" + p] = c.add_node("M2." + p)
            elif bus == "M2" and not mv_present:
                continue
            else:
                node[bus + p] = c.add_node(f"{bus}.{p}")

    zmv, zhv, zg = params.mv_line_z(), params.hv_line_z(), params.grid_z()
    k = 1.0 / SQRT3
    for p in PHASES:
        c.add_branch(f"vsc.{p}", {node["T" + p]: -1.0}, params.r_f, params.x_f,
                     source=(f"vsw_{p}", 1.0), group="vsc")
        c.add_cap(node["T" + p], params.b_f)
        c.add_branch(f"t1.{p}", {node["T" + p]: 1.0, node["M1" + p]: -k, node["M1" + _prev(p)]: k},
                     params.xfmr_r, params.xfmr_x, group="t1")
        if mv_present:
            c.add_branch(f"mv.{p}", {node["M1" + p]: 1.0, node["M2" + p]: -1.0},
                         zmv.real, zmv.imag, group="mv")
        c.add_branch(f"t2.{p}", {node["M2" + p]: 1.0, node["H1" + p]: -k, node["H1" + _prev(p)]: k},
                     params.xfmr_r, params.xfmr_x, group="t2")
        for circ in ("hv1", "hv2"):
            c.add_branch(f"{circ}.{p}", {node["H1" + p]: 1.0, node["H2" + p]: -1.0},
                         zhv.real, zhv.imag, group=circ)
        c.add_branch(f"grid.{p}", {node["H2" + p]: 1.0}, zg.real, zg.imag,
                     source=(f"grid_{p}", -1.0), group="grid")
    ld = params.load
    zab = complex(ld.r_ab, ld.x_ab)
    for (p, q), scale in ((("a", "b"), 1.0), (("b", "c"), ld.scale_bc), (("c", "a"), ld.scale_ca)):
        z = zab * scale
        c.add_branch(f"load.{p}{q}", {node["T" + p]: 1.0, node["T" + q]: -1.0},
                     z.real, z.imag, group="load")
    return c


# ---------------------------------------------------------------------------
# compiled model


@dataclass
class PlantState:
    x: np.ndarray
    t: float = 0.0
    epoch: int = 0


@dataclass
class Measurements:
    v: np.ndarray  # terminal (filter capacitor) voltage
    i: np.ndarray  # converter-side filter current
    io: np.ndarray  # current leaving the terminal towards the network


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    kind: str  # fault_on | fault_off | breaker_open | breaker_close | load_connect | load_disconnect
    target: str | None = None
    phase: str | None = None

    KINDS = ("fault_on", "fault_off", "breaker_open", "breaker_close",
             "load_connect", "load_disconnect")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown event kind {self.kind!r}")


class NetworkModel:
    """Compiled circuit with topology state and cached discrete step maps."""

    def __init__(self, circuit: Circuit, params: NetworkParams | None = None):
        self.circuit = circuit
        self.params = params
        self.omega_base = circuit.omega_base
        self.omega_grid = params.omega_grid if params else circuit.omega_base
        self.grid_v = params.grid_v if params else 1.0
        self.out_of_service: set[str] = set()
        self.epoch = 0
        self.nodes = list(circuit.nodes)
        self.node_index = {n: k for k, n in enumerate(self.nodes)}
        self.branch_index = {b.name: k for k, b in enumerate(circuit.branches)}
        self.nb = len(circuit.branches)
        self.nn = len(self.nodes)
        if params is not None and not params.load.enabled:
            self.out_of_service.add("load")
        self._compile()

    # -- structure ---------------------------------------------------------
    def _compile(self) -> None:
        c = self.circuit
        nb, nn = self.nb, self.nn
        self.A = np.zeros((nn, nb))
        self.L = np.zeros(nb)
        self.R = np.zeros(nb)
        self.S = np.zeros((nb, len(INPUTS)))
        self.active = np.zeros(nb, dtype=bool)
        for k, b in enumerate(c.branches):
            self.L[k] = b.x / self.omega_base
            self.R[k] = b.r
            if b.group in self.out_of_service:
                continue
            self.active[k] = True
            for node, coef in b.coeffs.items():
                self.A[self.node_index[node], k] += coef
            if b.source is not None:
                self.S[k, INPUTS.index(b.source[0])] = b.source[1]
        self.C = np.zeros(nn)
        for node, bval in c.caps.items():
            self.C[self.node_index[node]] = bval / self.omega_base
        self.G = np.zeros((nn, nn))
        for cd in c.conductances:
            if cd.group in self.out_of_service:
                continue
            a = np.zeros(nn)
            for node, coef in cd.coeffs.items():
                a[self.node_index[node]] += coef
            self.G += cd.g * np.outer(a, a)
        self._step_cache: dict = {}
        self._lift_cache: dict = {}

    @property
    def n_states(self) -> int:
        """In-service storage elements (inductors plus capacitors)."""
        return int(np.count_nonzero(self.active)) + int(np.count_nonzero(self.C))

    @property
    def size(self) -> int:
        return self.nb + 2 * self.nn

    def split(self, x):
        return x[: self.nb], x[self.nb: self.nb + self.nn], x[self.nb + self.nn:]

    def branch_slice(self, group: str) -> list[int]:
        return [k for k, b in enumerate(self.circuit.branches) if b.group == group]

    def node_ids(self, bus: str) -> list[int]:
        return [self.node_index[f"{bus}.{p}"] for p in PHASES]

    # -- discretisation ----------------------------------------------------
    def step_matrices(self, h: float, theta: float = 0.5):
        """x' = Phi x + Psi u_eff for one step of the theta-method.

        ``u_eff`` is the theta-weighted input over the step (the held value for
        zero-order-hold inputs). theta = 0.5 is the trapezoidal rule; theta = 1
        is backward Euler.
        """
        key = (h, theta)
        if key in self._step_cache:
            return self._step_cache[key]
        nb, nn = self.nb, self.nn
        act = self.active.astype(float)
        alpha = h * theta / self.L
        beta = 1.0 + alpha * self.R
        g = act * alpha / beta
        # hist = Hi i + Hv v + Hu u
        Hi = np.diag(act * (1.0 - h * (1.0 - theta) * self.R / self.L) / beta)
        Hv = (act * h * (1.0 - theta) / self.L / beta)[:, None] * self.A.T
        Hu = (act * h / self.L / beta)[:, None] * self.S
        dc = self.C / (h * theta)
        Y = self.A @ (g[:, None] * self.A.T) + self.G + np.diag(dc)
        if nn:
            cond = np.linalg.cond(Y)
            if not np.isfinite(cond) or cond > 1e14:
                raise AssemblyError(f"nodal matrix is singular (cond={cond:.3g}); floating subnetwork?")
            Yinv = np.linalg.inv(Y)
        else:
            Yinv = np.zeros((0, 0))
        # capacitor-current history only exists where there is a capacitor
        ci = (1.0 - theta) / theta * (self.C > 0)
        # v' = Yinv (-A hist + dc v + ci iC)
        Vi = -Yinv @ self.A @ Hi
        Vv = Yinv @ (-self.A @ Hv + np.diag(dc))
        ViC = Yinv * ci[None, :]
        Vu = -Yinv @ self.A @ Hu
        # i' = g A^T v' + hist
        gAT = g[:, None] * self.A.T
        Ii = gAT @ Vi + Hi
        Iv = gAT @ Vv + Hv
        IiC = gAT @ ViC
        Iu = gAT @ Vu + Hu
        # iC' = dc (v' - v) - ci iC
        Ci = dc[:, None] * Vi
        Cv = dc[:, None] * Vv - np.diag(dc)
        CiC = dc[:, None] * ViC - np.diag(ci)
        Cu = dc[:, None] * Vu
        Phi = np.block([[Ii, Iv, IiC], [Vi, Vv, ViC], [Ci, Cv, CiC]])
        Psi = np.vstack([Iu, Vu, Cu])
        self._step_cache[key] = (Phi, Psi)
        return Phi, Psi

    def grid_source(self, t):
        return self.grid_v * np.cos(self.omega_grid * t + PHASE_OFFSETS)

    def _grid_basis(self, tau):
        """W(tau) with grid(t0 + tau) = W(tau) @ (cos w t0, sin w t0)."""
        ang = self.omega_grid * tau + PHASE_OFFSETS
        return self.grid_v * np.column_stack([np.cos(ang), -np.sin(ang)])

    def lifted(self, h: float, n: int, theta: float = 0.5):
        """Exact composition of ``n`` steps with held vsw and the grid sinusoid.

        Returns (M, Gsw, Ggrid): x_n = M x_0 + Gsw vsw + Ggrid (cos w t0, sin w t0).
        """
        key = (h, n, theta)
        if key in self._lift_cache:
            return self._lift_cache[key]
        Phi, Psi = self.step_matrices(h, theta)
        m = Phi.shape[0]
        M = np.eye(m)
        Gsw = np.zeros((m, 3))
        Ggr = np.zeros((m, 2))
        for k in range(n):
            w = theta * self._grid_basis((k + 1) * h) + (1.0 - theta) * self._grid_basis(k * h)
            M = Phi @ M
            Gsw = Phi @ Gsw + Psi[:, :3]
            Ggr = Phi @ Ggr + Psi[:, 3:] @ w
        self._lift_cache[key] = (M, Gsw, Ggr)
        return M, Gsw, Ggr

    def state_dimension(self, h: float = 1e-5) -> int:
        """Number of independent storage states.

        Rank of the backward-Euler map restricted to inductor currents and
        capacitor voltages: KCL at capacitor-free nodes removes the dependent
        currents from its image.
        """
        Phi, _ = self.step_matrices(h, theta=1.0)
        rows = np.concatenate([np.arange(self.nb), self.nb + np.flatnonzero(self.C > 0)])
        sub = Phi[rows]
        return int(np.linalg.matrix_rank(sub, tol=1e-9 * max(1.0, np.abs(sub).max())))

    def continuous_eigenvalues(self, h: float = 1e-5) -> np.ndarray:
        """Eigenvalues of the storage dynamics (inverse of the backward-Euler map)."""
        Phi, _ = self.step_matrices(h, theta=1.0)
        z = np.linalg.eigvals(Phi)
        z = z[np.abs(z) > 1e-9]
        return (1.0 - 1.0 / z) / h

    # -- energy / checks ---------------------------------------------------
    def stored_energy(self, state: PlantState) -> float:
        i, v, _ = self.split(state.x)
        return 0.5 * float(np.sum(self.L * i**2) + np.sum(self.C * v**2))

    def kcl_residual(self, state: PlantState) -> np.ndarray:
        i, v, ic = self.split(state.x)
        return self.A @ i + self.G @ v + ic

    # -- measurements ------------------------------------------------------
    def measure(self, state: PlantState) -> Measurements:
        i, v, ic = self.split(state.x)
        tn = self.node_ids("T")
        ivsc = i[self.branch_slice("vsc")]
        return Measurements(v=v[tn].copy(), i=ivsc.copy(), io=ivsc - ic[tn])

    def bus_voltage(self, state: PlantState, bus: str) -> np.ndarray:
        _, v, _ = self.split(state.x)
        return v[self.node_ids(BUSES.get(bus, bus))]

    # -- topology ----------------------------------------------------------
    def _retopologize(self, state: PlantState | None) -> None:
        self.epoch += 1
        self._compile()
        if state is not None:
            i, v, ic = self.split(state.x)
            i[~self.active] = 0.0
            ic[:] = -(self.A @ i + self.G @ v)
            ic[self.C == 0] = 0.0
            state.epoch = self.epoch

    def apply_event(self, event: SwitchEvent, state: PlantState | None = None) -> "NetworkModel":
        groups = self.circuit.groups()
        kind, target = event.kind, event.target
        if kind in ("breaker_open", "breaker_close"):
            if target not in groups:
                raise ConfigurationError(f"event references nonexistent branch {target!r}")
            if kind == "breaker_open":
                self.out_of_service.add(target)
            else:
                self.out_of_service.discard(target)
        elif kind in ("load_connect", "load_disconnect"):
            if "load" not in groups:
                raise ConfigurationError("no load in this network")
            if kind == "load_disconnect":
                self.out_of_service.add("load")
            else:
                self.out_of_service.discard("load")
        elif kind == "fault_on":
            node, group = self._fault_node(target, event.phase)
            g = 1.0 / (self.params.fault_r if self.params else 1e-4)
            name = f"fault:{target}:{event.phase}"
            self.circuit.remove_conductance(name)
            self.circuit.add_conductance(name, {node: 1.0}, g, group=group)
        elif kind == "fault_off":
            name = f"fault:{target}:{event.phase}"
            if not self.circuit.remove_conductance(name):
                raise ConfigurationError(f"no active fault {name}")
        self._retopologize(state)
        logger.debug("applied %s at t=%.6f (epoch %d)", kind, event.time, self.epoch)
        return self

    def _fault_node(self, location: str | None, phase: str | None):
        if phase not in PHASES:
            raise ConfigurationError(f"fault phase must be one of {PHASES}")
        loc, _, end = (location or "").partition("@")
        if loc in BUSES:
            bus, group = BUSES[loc], None
        elif loc in ("hv1", "hv2", "mv") and loc in self.circuit.groups():
            branch = self.circuit.branches[self.branch_index[f"{loc}.{phase}"]]
            ends = [n for n, cf in branch.coeffs.items() if cf != 0]
            # sending end is the +1 terminal
            send = [n for n in ends if branch.coeffs[n] > 0][0]
            recv = [n for n in ends if branch.coeffs[n] < 0][0]
            bus, group = (recv if end == "far" else send).split(".")[0], loc
        else:
            raise ConfigurationError(f"unknown fault location {location!r}")
        node = f"{bus}.{phase}"
        if node not in self.node_index:
            raise ConfigurationError(f"fault node {node} does not exist")
        return node, group

    # -- stepping ----------------------------------------------------------
    def zero_state(self) -> PlantState:
        return PlantState(np.zeros(self.size), 0.0, self.epoch)


def assemble(params: NetworkParams) -> NetworkModel:
    """Build and compile the test system described by ``params``."""
    model = NetworkModel(build_test_system(params), params)
    model.step_matrices(1e-5)  # surfaces singular topologies at assembly time
    return model


def _inputs(vsw, t0, t1, theta, model):
    if callable(vsw):
        sw = theta * np.asarray(vsw(t1)) + (1.0 - theta) * np.asarray(vsw(t0))
    else:
        sw = np.asarray(vsw, dtype=float)
    gr = theta * model.grid_source(t1) + (1.0 - theta) * model.grid_source(t0)
    return np.concatenate([sw, gr])


def plant_step(model: NetworkModel, state: PlantState, vsw, dt: float,
               theta: float = 0.5) -> tuple[PlantState, Measurements]:
    """Advance one step. ``vsw`` is a held 3-vector or a callable of time."""
    Phi, Psi = model.step_matrices(dt, theta)
    u = _inputs(vsw, state.t, state.t + dt, theta, model)
    with np.errstate(invalid="ignore", over="ignore"):
        x = Phi @ state.x + Psi @ u
    if not np.all(np.isfinite(x)):
        raise SimulationAbort(f"non-finite plant state at t={state.t + dt:.6f}")
    new = PlantState(x, state.t + dt, model.epoch)
    return new, model.measure(new)


def settle_after_switch(model: NetworkModel, state: PlantState, vsw, dt: float) -> PlantState:
    """Two backward-Euler half steps; damps the trapezoidal chatter a topology
    change would otherwise cause in algebraic node voltages."""
    for _ in range(2):
        state, _ = plant_step(model, state, vsw, dt / 2, theta=1.0)
    return state


def advance(model: NetworkModel, state: PlantState, vsw, dt: float, n: int) -> PlantState:
    """``n`` trapezoidal steps with held ``vsw`` using the cached lifted map."""
    if n == 0:
        return state
    M, Gsw, Ggr = model.lifted(dt, n)
    wt = model.omega_grid * state.t
    with np.errstate(invalid="ignore", over="ignore"):
        x = M @ state.x + Gsw @ np.asarray(vsw, dtype=float) + Ggr @ np.array([math.cos(wt), math.sin(wt)])
    if not np.all(np.isfinite(x)):
        raise SimulationAbort(f"non-finite plant state at t={state.t + n * dt:.6f}")
    return PlantState(x, state.t + n * dt, model.epoch)


# ---------------------------------------------------------------------------
# phasor steady state


def solve_phasor(model: NetworkModel, e_sw, omega: float | None = None, e_grid=None):
    """Sinusoidal steady state for source phasors (peak, cosine reference).

    Returns (branch current phasors, node voltage phasors).
    """
    omega = model.omega_grid if omega is None else omega
    if e_grid is None:
        e_grid = model.grid_v * np.exp(1j * PHASE_OFFSETS)
    u = np.concatenate([np.asarray(e_sw, dtype=complex), np.asarray(e_grid, dtype=complex)])
    z = model.R + 1j * omega * model.L
    y = np.where(model.active, 1.0 / z, 0.0)
    Ybus = model.A @ (y[:, None] * model.A.T) + model.G + np.diag(1j * omega * model.C)
    E = model.S @ u
    V = np.linalg.solve(Ybus, -model.A @ (y * E)) if model.nn else np.zeros(0, complex)
    I = y * (model.A.T @ V + E)
    return I, V


def phasor_state(model: NetworkModel, e_sw, t: float = 0.0, omega: float | None = None) -> PlantState:
    """Instantaneous plant state at time ``t`` of the phasor steady state."""
    omega = model.omega_grid if omega is None else omega
    I, V = solve_phasor(model, e_sw, omega)
    rot = np.exp(1j * omega * t)
    i = np.real(I * rot)
    v = np.real(V * rot)
    ic = np.real(1j * omega * model.C * V * rot)
    return PlantState(np.concatenate([i, v, ic]), t, model.epoch)


def open_circuit_terminal(model: NetworkModel) -> np.ndarray:
    """Terminal voltage phasors with the converter branches disconnected."""
    saved = set(model.out_of_service)
    model.out_of_service.add("vsc")
    model._compile()
    try:
        _, V = solve_phasor(model, np.zeros(3))
    finally:
        model.out_of_service = saved
        model._compile()
    return V[model.node_ids("T")]


def with_params(params: NetworkParams, **changes) -> NetworkParams:
    return replace(params, **changes)

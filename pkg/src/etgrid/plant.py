"""Electrical microgrid: DG average models, RL lines/loads, bus coupling.

All DGs and branches share one synchronous dq frame at the nominal
angular frequency.  Line junctions get a small parasitic capacitance
C_bus so the network is a pure ODE rather than a DAE; loads are constant
impedances computed from their kW/kVAr rating at nominal voltage.

The inner voltage loop is a PI on (v_cd -> v_ref, v_cq -> 0) plus a
capacitor-current damping term.  A bare PI at the documented gains
leaves the LC filter resonance (~2.2 kHz) unstable against every load
combination of the reference topology (closed-loop modes at +23..+42
1/s); the damping term -k_ad (i_f - i_c) restores a uniform margin
without touching the PI gains.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrationDivergedError
from .model import (DGParams, ICD, ICQ, IFD, IFQ, STATE_NAMES, VCD, VCQ,
                    droop_voltage_ref, reactive_power)


@dataclass(frozen=True)
class InnerGains:
    k_p: float = 0.5    # voltage proportional [-]
    k_i: float = 200.0  # voltage integral [1/s]
    k_ad: float = 10.0  # capacitor-current damping [ohm]


@dataclass(frozen=True)
class LineBranch:
    """Series RL branch between two buses."""

    from_bus: int
    to_bus: int
    R: float   # [ohm]
    L: float   # [H]


@dataclass(frozen=True)
class LoadBranch:
    """Series RL load to ground, optionally gated by a switch schedule.

    ``schedule`` is a sorted tuple of (time [s], closed) transitions applied
    on top of ``initially_closed``.
    """

    name: str
    bus: int
    R: float   # [ohm]
    L: float   # [H]
    initially_closed: bool = True
    schedule: tuple = ()


def rated_load_impedance(P: float, Q: float, v_nom: float, omega: float):
    """(R, L) of the series branch drawing (P, Q) at voltage v_nom.

    Uses the same instantaneous dq power convention as the DG model
    (P = v_d i_d + v_q i_q, Q = v_q i_d - v_d i_q), so an inductive load
    consumes positive Q.
    """
    if P < 0 or Q < 0 or (P == 0 and Q == 0):
        raise ConfigError(f"load rating must be nonzero with P, Q >= 0, got ({P}, {Q})")
    S2 = P * P + Q * Q
    R = P * v_nom**2 / S2
    X = Q * v_nom**2 / S2
    return R, X / omega


@dataclass(frozen=True)
class Topology:
    """Electrical layout: DGs at buses, lines, switched loads, bus shunts."""

    dgs: tuple                 # one DGParams per DG
    dg_bus: tuple              # bus index per DG
    n_bus: int
    lines: tuple               # LineBranch
    loads: tuple               # LoadBranch
    c_bus: float = 1e-6        # parasitic bus capacitance [F]
    omega: float = 2 * np.pi * 50.0

    def __post_init__(self):
        if self.c_bus <= 0:
            raise ConfigError("c_bus must be positive")
        if any(b >= self.n_bus or b < 0 for b in self.dg_bus):
            raise ConfigError("dg_bus index out of range")
        for br in self.lines:
            if not (0 <= br.from_bus < self.n_bus and 0 <= br.to_bus < self.n_bus):
                raise ConfigError(f"line {br} references a missing bus")
            if br.R < 0 or br.L <= 0:
                raise ConfigError(f"line {br} must have R >= 0, L > 0")
        for ld in self.loads:
            if not 0 <= ld.bus < self.n_bus:
                raise ConfigError(f"load {ld.name} references a missing bus")
            if ld.R < 0 or ld.L <= 0:
                raise ConfigError(f"load {ld.name} must have R >= 0, L > 0")

    @property
    def n_dg(self) -> int:
        return len(self.dgs)


def load_connected(load: LoadBranch, t: float) -> bool:
    """Switch state of one load at time t (transitions act at their instant)."""
    closed = load.initially_closed
    for time, state in load.schedule:
        if t >= time:
            closed = state
        else:
            break
    return closed


def apply_switch_events(topology: Topology, t: float) -> np.ndarray:
    """Per-load connectivity flags at time t."""
    return np.array([load_connected(ld, t) for ld in topology.loads], dtype=bool)


@dataclass
class MicrogridState:
    """Full continuous state of the network plus controller memory."""

    x_dg: np.ndarray        # (n_dg, 6) DG states
    v_bus: np.ndarray       # (n_bus, 2) bus voltages (d, q)
    i_line: np.ndarray      # (n_line, 2) line currents
    i_load: np.ndarray      # (n_load, 2) load currents (zero when open)
    x_hat: np.ndarray       # (n_dg, 6) observer estimates
    inner_integ: np.ndarray  # (n_dg, 2) inner-loop PI integrators
    t: float = 0.0
    connected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def microgrid_derivative(state: MicrogridState, topology: Topology,
                         controls: np.ndarray) -> MicrogridState:
    """Time derivative of the electrical state for fixed controls.

    ``controls`` is the (n_dg, 2) inverter voltage command, held constant.
    Observer states are not advanced here (rate 0); the engines couple
    them separately.
    """
    om = topology.omega
    x = state.x_dg
    vb = state.v_bus
    inj = np.zeros_like(vb)
    dx = np.empty_like(x)
    for k, p in enumerate(topology.dgs):
        b = topology.dg_bus[k]
        u = controls[k]
        dx[k, IFD] = (-p.R_f * x[k, IFD] - x[k, VCD] + u[0]) / p.L_f + om * x[k, IFQ]
        dx[k, IFQ] = (-p.R_f * x[k, IFQ] - x[k, VCQ] + u[1]) / p.L_f - om * x[k, IFD]
        dx[k, VCD] = (x[k, IFD] - x[k, ICD]) / p.C_f + om * x[k, VCQ]
        dx[k, VCQ] = (x[k, IFQ] - x[k, ICQ]) / p.C_f - om * x[k, VCD]
        dx[k, ICD] = (x[k, VCD] - p.R_c * x[k, ICD] - vb[b, 0]) / p.L_c + om * x[k, ICQ]
        dx[k, ICQ] = (x[k, VCQ] - p.R_c * x[k, ICQ] - vb[b, 1]) / p.L_c - om * x[k, ICD]
        inj[b, 0] += x[k, ICD]
        inj[b, 1] += x[k, ICQ]

    di_line = np.empty_like(state.i_line)
    for j, br in enumerate(topology.lines):
        a, b = br.from_bus, br.to_bus
        i_d, i_q = state.i_line[j]
        di_line[j, 0] = (vb[a, 0] - vb[b, 0] - br.R * i_d) / br.L + om * i_q
        di_line[j, 1] = (vb[a, 1] - vb[b, 1] - br.R * i_q) / br.L - om * i_d
        inj[a, 0] -= i_d
        inj[a, 1] -= i_q
        inj[b, 0] += i_d
        inj[b, 1] += i_q

    di_load = np.zeros_like(state.i_load)
    for j, ld in enumerate(topology.loads):
        if state.connected.size and not state.connected[j]:
            continue
        i_d, i_q = state.i_load[j]
        di_load[j, 0] = (vb[ld.bus, 0] - ld.R * i_d) / ld.L + om * i_q
        di_load[j, 1] = (vb[ld.bus, 1] - ld.R * i_q) / ld.L - om * i_d
        inj[ld.bus, 0] -= i_d
        inj[ld.bus, 1] -= i_q

    dv_bus = np.empty_like(vb)
    dv_bus[:, 0] = om * vb[:, 1] + inj[:, 0] / topology.c_bus
    dv_bus[:, 1] = -om * vb[:, 0] + inj[:, 1] / topology.c_bus

    return MicrogridState(x_dg=dx, v_bus=dv_bus, i_line=di_line,
                          i_load=di_load, x_hat=np.zeros_like(state.x_hat),
                          inner_integ=np.zeros_like(state.inner_integ),
                          t=1.0, connected=state.connected)


def rk4_step(deriv, state, h: float):
    """One classical Runge-Kutta step of an autonomous system.

    ``deriv`` maps a state array to its rate; ``state`` may be a scalar
    or an ndarray.  A non-finite result raises IntegrationDivergedError
    naming the first offending component.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(deriv(y))
    k2 = np.asarray(deriv(y + 0.5 * h * k1))
    k3 = np.asarray(deriv(y + 0.5 * h * k2))
    k4 = np.asarray(deriv(y + h * k3))
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmin(np.isfinite(np.atleast_1d(out))))
        raise IntegrationDivergedError(
            f"integration diverged at component {bad}", component=bad)
    if np.isscalar(state):
        return float(out)
    return out


def inner_loop_control(dg_state, v_ref: float, gains: InnerGains,
                       integ, h: float):
    """Inner voltage loop: PI towards (v_ref, 0) plus capacitor-current damping.

    Returns (u, integ'); the integrator advances before the output is
    formed, matching the secondary controller's convention.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    x = np.asarray(dg_state, dtype=float)
    integ = np.asarray(integ, dtype=float).copy()
    e_d = v_ref - x[VCD]
    e_q = -x[VCQ]
    integ[0] += h * e_d
    integ[1] += h * e_q
    u = np.array([
        gains.k_p * e_d + gains.k_i * integ[0] - gains.k_ad * (x[IFD] - x[ICD]),
        gains.k_p * e_q + gains.k_i * integ[1] - gains.k_ad * (x[IFQ] - x[ICQ]),
    ])
    return u, integ


def steady_state(topology: Topology, connected, delta_v=None,
                 tol: float = 1e-12, max_iter: int = 100):
    """Equilibrium of the droop-controlled network for a fixed topology.

    Treats each DG as an ideal source v_c = (v_ref, 0) behind its output
    impedance (the inner PI enforces exactly that in steady state) and
    iterates the droop fixed point v_ref = v* - n_d Q + delta_v through a
    complex nodal solve.  Returns (MicrogridState, u, Q) with x_hat = x_dg
    and inner integrators left zero (callers set them from u).
    """
    om = topology.omega
    n_dg, n_bus = topology.n_dg, topology.n_bus
    connected = np.asarray(connected, dtype=bool)
    if delta_v is None:
        delta_v = np.zeros(n_dg)
    z_c = np.array([p.R_c + 1j * om * p.L_c for p in topology.dgs])
    v_ref = np.array([p.v_star for p in topology.dgs], dtype=float)
    V_t = np.zeros(n_bus, dtype=complex)
    for _ in range(max_iter):
        Y = np.zeros((n_bus, n_bus), dtype=complex)
        I = np.zeros(n_bus, dtype=complex)
        for k, p in enumerate(topology.dgs):
            b = topology.dg_bus[k]
            Y[b, b] += 1.0 / z_c[k]
            I[b] += v_ref[k] / z_c[k]
        for br in topology.lines:
            y = 1.0 / (br.R + 1j * om * br.L)
            Y[br.from_bus, br.from_bus] += y
            Y[br.to_bus, br.to_bus] += y
            Y[br.from_bus, br.to_bus] -= y
            Y[br.to_bus, br.from_bus] -= y
        for j, ld in enumerate(topology.loads):
            if connected[j]:
                Y[ld.bus, ld.bus] += 1.0 / (ld.R + 1j * om * ld.L)
        Y[np.diag_indices(n_bus)] += 1j * om * topology.c_bus
        V_t = np.linalg.solve(Y, I)
        I_c = (v_ref - V_t[list(topology.dg_bus)]) / z_c
        Q = (v_ref * np.conj(I_c)).imag
        v_new = np.array([
            droop_voltage_ref(p.v_star, p.n_d, Q[k], delta_v[k])
            for k, p in enumerate(topology.dgs)])
        if np.abs(v_new - v_ref).max() < tol:
            v_ref = v_new
            break
        v_ref = v_new

    V_c = v_ref.astype(complex)
    I_c = (V_c - V_t[list(topology.dg_bus)]) / z_c
    I_f = np.array([I_c[k] + 1j * om * p.C_f * V_c[k]
                    for k, p in enumerate(topology.dgs)])
    V_s = np.array([V_c[k] + (p.R_f + 1j * om * p.L_f) * I_f[k]
                    for k, p in enumerate(topology.dgs)])
    x_dg = np.column_stack([I_f.real, I_f.imag, V_c.real, V_c.imag,
                            I_c.real, I_c.imag])
    i_line = np.array([
        (V_t[br.from_bus] - V_t[br.to_bus]) / (br.R + 1j * om * br.L)
        for br in topology.lines], dtype=complex).reshape(-1)
    i_load = np.array([
        V_t[ld.bus] / (ld.R + 1j * om * ld.L) if connected[j] else 0j
        for j, ld in enumerate(topology.loads)], dtype=complex).reshape(-1)
    state = MicrogridState(
        x_dg=x_dg,
        v_bus=np.column_stack([V_t.real, V_t.imag]),
        i_line=np.column_stack([i_line.real, i_line.imag]) if len(topology.lines)
        else np.zeros((0, 2)),
        i_load=np.column_stack([i_load.real, i_load.imag]) if len(topology.loads)
        else np.zeros((0, 2)),
        x_hat=x_dg.copy(),
        inner_integ=np.zeros((n_dg, 2)),
        t=0.0,
        connected=connected.copy(),
    )
    u = np.column_stack([V_s.real, V_s.imag])
    return state, u, Q


def initial_state(topology: Topology, inner: InnerGains,
                  observer_init: str = "true_state") -> MicrogridState:
    """Settled operating point of the initial topology, controllers consistent.

    The inner integrators are set so the PI reproduces the equilibrium
    command (including the damping-term offset); observers start at the
    true state ("true_state") or cold at zero ("zero").
    """
    connected = apply_switch_events(topology, 0.0)
    state, u, _ = steady_state(topology, connected)
    if inner.k_i <= 0:
        raise ConfigError("inner k_i must be positive to hold an equilibrium")
    x = state.x_dg
    i_cap = np.column_stack([x[:, IFD] - x[:, ICD], x[:, IFQ] - x[:, ICQ]])
    state.inner_integ = (u + inner.k_ad * i_cap) / inner.k_i
    if observer_init == "zero":
        state.x_hat = np.zeros_like(state.x_dg)
    elif observer_init != "true_state":
        raise ConfigError(f"unknown observer_init {observer_init!r}")
    return state


def state_component_name(topology: Topology, index: int) -> str:
    """Human-readable name of one flat-state component (for diagnostics)."""
    n_dg = topology.n_dg
    names = []
    for k in range(n_dg):
        names += [f"dg{k + 1}_{s}" for s in STATE_NAMES]
    for b in range(topology.n_bus):
        names += [f"bus{b + 1}_vd", f"bus{b + 1}_vq"]
    for j in range(len(topology.lines)):
        names += [f"line{j + 1}_id", f"line{j + 1}_iq"]
    for j, ld in enumerate(topology.loads):
        names += [f"{ld.name}_id", f"{ld.name}_iq"]
    for k in range(n_dg):
        names += [f"dg{k + 1}_{s}_hat" for s in STATE_NAMES]
    return names[index] if 0 <= index < len(names) else f"component{index}"

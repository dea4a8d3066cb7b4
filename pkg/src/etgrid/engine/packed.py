"""Flat-array scenario representation shared by both engines.

The kernels work on one flat state vector

    y = [ DG states | bus voltages | line currents | load currents | estimates ]

with per-DG blocks of six and per-branch blocks of two (d, q).  Switch
transitions, the secondary enable instant and all event decisions are
expressed in integer control-step indices so both engines make identical
discrete decisions.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Layout:
    n_dg: int
    n_bus: int
    n_line: int
    n_load: int

    @property
    def off_dg(self) -> int:
        return 0

    @property
    def off_bus(self) -> int:
        return 6 * self.n_dg

    @property
    def off_line(self) -> int:
        return self.off_bus + 2 * self.n_bus

    @property
    def off_load(self) -> int:
        return self.off_line + 2 * self.n_line

    @property
    def off_obs(self) -> int:
        return self.off_load + 2 * self.n_load

    @property
    def n_state(self) -> int:
        return self.off_obs + 6 * self.n_dg


@dataclass
class PackedScenario:
    """Everything a kernel needs, as plain scalars and contiguous arrays."""

    layout: Layout
    omega: float
    # per-DG physics
    dg_bus: np.ndarray      # int64 (n_dg,)
    R_f: np.ndarray
    L_f: np.ndarray
    C_f: np.ndarray
    R_c: np.ndarray
    L_c: np.ndarray
    n_d: np.ndarray
    v_star: np.ndarray
    # network
    line_a: np.ndarray      # int64 (n_line,)
    line_b: np.ndarray
    line_R: np.ndarray
    line_L: np.ndarray
    load_bus: np.ndarray    # int64 (n_load,)
    load_R: np.ndarray
    load_L: np.ndarray
    c_bus: float
    conn0: np.ndarray       # uint8 (n_load,)
    sched_step: np.ndarray  # int64 (n_sched,) sorted ascending
    sched_load: np.ndarray  # int64
    sched_closed: np.ndarray  # uint8
    # observer + trigger
    L_gain: np.ndarray      # (n_dg, 6)
    PL: np.ndarray          # (n_dg, 6)  P @ L per DG
    P: np.ndarray           # (n_dg, 6, 6)
    Q_t: np.ndarray         # (6, 6)
    sigma: float
    epsilon: float
    # inner loop
    kp: float
    ki: float
    kad: float
    # secondary
    kpV: float
    kiV: float
    kpQ: float
    kiQ: float
    clamp_v: float
    clamp_q: float
    v_star_sec: float
    enable_step: int        # -1 = never
    # stepping
    n_steps: int            # control steps; monitors get n_steps + 1 samples
    dt: float               # control step [s]
    n_sub: int              # RK4 substeps per control step
    decimate: int
    feed_live: int          # 1 = live u/v_t feedforward, 0 = packet-held
    # initial conditions
    y0: np.ndarray
    integ0: np.ndarray      # (n_dg, 2)

    @property
    def h_sub(self) -> float:
        return self.dt / self.n_sub


MONITOR_KEYS = ("e_norm", "eta", "trig", "v_lyap", "eqe", "dvdt",
                "vcd", "q", "q_hat", "delta_v")


@dataclass
class RawRun:
    """Raw kernel output; the harness turns this into Traces/Metrics."""

    event_steps: list       # per DG: int64 array of control-step indices
    monitors: dict          # MONITOR_KEYS -> (n_steps + 1, n_dg) arrays
    trace: np.ndarray       # decimated rows x columns (see harness)
    y_final: np.ndarray
    integ_final: np.ndarray
    xk_final: np.ndarray    # (n_dg, 6) held state snapshots at the last events
    engine: str = ""


def trace_row_count(n_steps: int, decimate: int) -> int:
    return n_steps // decimate + 1


def trace_width(layout: Layout) -> int:
    # t | true states | estimates | eta, trig, delta_v, Q, Q_hat | bus voltages
    return 1 + 6 * layout.n_dg + 6 * layout.n_dg + 5 * layout.n_dg + 2 * layout.n_bus


def pack_scenario(topology, inner, designs, sec_gains, enable_step,
                  n_steps, dt, n_sub, decimate, feed_live, state0):
    """Assemble a PackedScenario from the structured objects.

    ``designs`` is one ObserverDesign per DG; ``state0`` a MicrogridState
    whose inner integrators are already consistent with the equilibrium.
    """
    from ..secondary import integrator_clamp

    lay = Layout(n_dg=topology.n_dg, n_bus=topology.n_bus,
                 n_line=len(topology.lines), n_load=len(topology.loads))
    sched = []
    for j, ld in enumerate(topology.loads):
        for t_sw, closed in ld.schedule:
            step = int(round(t_sw / dt))
            if abs(step * dt - t_sw) > 1e-9:
                raise ValueError(
                    f"switch time {t_sw} for {ld.name} is not on the control grid")
            sched.append((step, j, int(closed)))
    sched.sort()
    sched_arr = np.array(sched, dtype=np.int64).reshape(-1, 3)

    y0 = np.concatenate([
        state0.x_dg.reshape(-1), state0.v_bus.reshape(-1),
        state0.i_line.reshape(-1), state0.i_load.reshape(-1),
        state0.x_hat.reshape(-1)])
    if y0.size != lay.n_state:
        raise ValueError(f"initial state has {y0.size} entries, expected {lay.n_state}")

    d = designs
    v_star = np.array([p.v_star for p in topology.dgs])
    return PackedScenario(
        layout=lay,
        omega=float(topology.omega),
        dg_bus=np.array(topology.dg_bus, dtype=np.int64),
        R_f=np.array([p.R_f for p in topology.dgs]),
        L_f=np.array([p.L_f for p in topology.dgs]),
        C_f=np.array([p.C_f for p in topology.dgs]),
        R_c=np.array([p.R_c for p in topology.dgs]),
        L_c=np.array([p.L_c for p in topology.dgs]),
        n_d=np.array([p.n_d for p in topology.dgs]),
        v_star=v_star,
        line_a=np.array([b.from_bus for b in topology.lines], dtype=np.int64),
        line_b=np.array([b.to_bus for b in topology.lines], dtype=np.int64),
        line_R=np.array([b.R for b in topology.lines]),
        line_L=np.array([b.L for b in topology.lines]),
        load_bus=np.array([l.bus for l in topology.loads], dtype=np.int64),
        load_R=np.array([l.R for l in topology.loads]),
        load_L=np.array([l.L for l in topology.loads]),
        c_bus=float(topology.c_bus),
        conn0=np.array([l.initially_closed for l in topology.loads], dtype=np.uint8),
        sched_step=np.ascontiguousarray(sched_arr[:, 0]),
        sched_load=np.ascontiguousarray(sched_arr[:, 1]),
        sched_closed=np.ascontiguousarray(sched_arr[:, 2].astype(np.uint8)),
        L_gain=np.stack([dd.L.reshape(-1) for dd in d]),
        PL=np.stack([(dd.P @ dd.L).reshape(-1) for dd in d]),
        P=np.stack([dd.P for dd in d]),
        Q_t=np.ascontiguousarray(d[0].Q_tilde),
        sigma=float(d[0].sigma),
        epsilon=float(d[0].epsilon),
        kp=float(inner.k_p), ki=float(inner.k_i), kad=float(inner.k_ad),
        kpV=float(sec_gains.k_pV), kiV=float(sec_gains.k_iV),
        kpQ=float(sec_gains.k_pQ), kiQ=float(sec_gains.k_iQ),
        clamp_v=float(integrator_clamp(v_star[0], sec_gains.k_iV)),
        clamp_q=float(integrator_clamp(v_star[0], sec_gains.k_iQ)),
        v_star_sec=float(v_star[0]),
        enable_step=int(enable_step),
        n_steps=int(n_steps), dt=float(dt), n_sub=int(n_sub),
        decimate=int(decimate), feed_live=int(feed_live),
        y0=y0, integ0=state0.inner_integ.copy(),
    )

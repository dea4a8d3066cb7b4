"""Scenario configuration, orchestration, metrics and file outputs.

A scenario is described by a plain-text ``key = value`` document (see
README for the grammar and the full key table; unknown keys are
rejected).  Two presets reproduce the reference experiments:

* ``estimation``  - local loads only, then CL1 in at 0.5 s, CL2 in at
  1.5 s, CL1 out at 2.0 s; secondary controller off.
* ``secondary``   - CL1 in at 0.5 s, secondary voltage controller
  enabled at 1.0 s.

All discrete decisions (switches, the secondary enable instant, event
triggers) live on the control grid, so a run is a pure function of its
configuration; reruns produce byte-identical files.
"""

import json
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import engine as engine_mod
from .engine.packed import pack_scenario
from .errors import ConfigError
from .etm import TriggerLog
from .mateq import design_observer
from .model import DGParams, STATE_NAMES, build_state_space
from .plant import (InnerGains, LineBranch, LoadBranch, Topology, initial_state,
                    rated_load_impedance)
from .secondary import SecondaryGains

_NEVER = float("inf")


@dataclass
class ScenarioConfig:
    # run shape
    scenario: str = "estimation"
    duration: float = 3.0          # [s]
    h: float = 1e-5                # integrator substep [s]
    control_dt: float = 0.0        # controller/ETM cadence [s]; 0 means = h
    decimate: int = 100
    baseline_rate: float = 10000.0  # periodic comparison rate [Hz]
    engine: str = "auto"
    # electrical parameters (reference values)
    v_star: float = 311.0
    freq_hz: float = 50.0
    r_f: float = 0.1
    l_f: float = 1.8e-3
    c_f: float = 3e-6
    r_c: float = 0.1
    l_c: float = 1.8e-3
    n_d: float = 1.3e-3
    m_d: float = 9.4e-5
    r_l1: float = 0.23
    l_l1: float = 318.3e-3
    r_l2: float = 0.35
    l_l2: float = 1.8e-3
    ll1_p: float = 8000.0
    ll1_q: float = 6900.0
    ll2_p: float = 0.0
    ll2_q: float = 0.0
    ll3_p: float = 7500.0
    ll3_q: float = 6000.0
    cl1_p: float = 5000.0
    cl1_q: float = 4000.0
    cl2_p: float = 4000.0
    cl2_q: float = 3000.0
    c_bus: float = 1e-6
    # inner voltage loop
    inner_kp: float = 0.5
    inner_ki: float = 200.0
    inner_kad: float = 10.0
    # secondary controller
    k_pv: float = 1.0
    k_iv: float = 5.0
    k_pq: float = 0.003
    k_iq: float = 0.4
    secondary_enable: float = _NEVER   # [s]; inf = never
    # observer and trigger tuning
    v_weight: float = 1.0
    w_scale: float = 1e7
    qtilde_scale: float = 1.0
    sigma: float = 0.5
    epsilon: float = 0.5
    observer_feed: str = "live"        # live | packet
    observer_init: str = "true_state"  # true_state | zero
    # switch schedule [s]; inf = never
    s1_close: float = _NEVER
    s1_open: float = _NEVER
    s2_close: float = _NEVER
    s2_open: float = _NEVER

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in ("estimation", "secondary", "custom"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if not self.h > 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.control_dt == 0.0:
            self.control_dt = self.h
        ratio = self.control_dt / self.h
        if self.control_dt < self.h or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                f"control_dt {self.control_dt} must be an integer multiple of h {self.h}")
        if self.duration < self.control_dt:
            raise ConfigError("duration is shorter than one control step")
        n_steps = self.duration / self.control_dt
        if abs(n_steps - round(n_steps)) > 1e-6:
            raise ConfigError(
                f"duration {self.duration} must be a multiple of control_dt {self.control_dt}")
        if self.decimate < 1:
            raise ConfigError(f"decimate must be >= 1, got {self.decimate}")
        if not self.baseline_rate > 0:
            raise ConfigError("baseline_rate must be positive")
        if self.baseline_rate >= 1.0 / self.h:
            raise ConfigError(
                f"baseline_rate {self.baseline_rate} Hz reaches the simulation "
                f"resolution 1/h = {1.0 / self.h} Hz")
        if not (0.0 < self.sigma < 1.0):
            raise ConfigError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        for key in ("v_weight", "w_scale", "qtilde_scale"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if self.engine not in ("auto", "compiled", "python"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.observer_feed not in ("live", "packet"):
            raise ConfigError(f"observer_feed must be live or packet, got {self.observer_feed!r}")
        if self.observer_init not in ("true_state", "zero"):
            raise ConfigError(f"observer_init must be true_state or zero")
        for key in ("s1_close", "s1_open", "s2_close", "s2_open", "secondary_enable"):
            t = getattr(self, key)
            if np.isfinite(t) and t < 0:
                raise ConfigError(f"{key} must be non-negative, got {t}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.control_dt))

    @property
    def n_sub(self) -> int:
        return int(round(self.control_dt / self.h))


_PRESETS = {
    "estimation": {"s1_close": 0.5, "s2_close": 1.5, "s1_open": 2.0,
                   "secondary_enable": _NEVER},
    "secondary": {"s1_close": 0.5, "secondary_enable": 1.0},
    "custom": {},
}

_STR_KEYS = {"scenario", "engine", "observer_feed", "observer_init"}
_INT_KEYS = {"decimate"}
_NONE_WORDS = {"none", "never", "inf"}


def _parse_value(key: str, raw: str, line_no: int):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw.lower()
    if raw.lower() in _NONE_WORDS:
        return _NEVER
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse {key} value {raw!r}") from None


def load_scenario(text: str) -> ScenarioConfig:
    """Parse a ``key = value`` scenario document (''#'' starts a comment).

    The scenario preset is applied first, then explicit keys override it;
    omitted keys keep the reference defaults.
    """
    known = {f.name for f in fields(ScenarioConfig)}
    entries = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip().lower()
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        entries[key] = _parse_value(key, raw, line_no)

    scenario = entries.get("scenario", ScenarioConfig.scenario)
    if scenario not in _PRESETS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    values = dict(_PRESETS[scenario])
    values["scenario"] = scenario
    values.update(entries)
    return ScenarioConfig(**values).validate()


def default_config(scenario: str = "estimation", **overrides) -> ScenarioConfig:
    """Programmatic counterpart of load_scenario for tests and sweeps."""
    if scenario not in _PRESETS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    values = dict(_PRESETS[scenario])
    values["scenario"] = scenario
    values.update(overrides)
    return ScenarioConfig(**values).validate()


def build_topology(config: ScenarioConfig) -> Topology:
    """Reference three-DG layout: DG1/DG2/DG3 on buses 1/2/3, lines 1-2 and
    2-3, local loads at their own buses, both common loads switched at bus 2."""
    omega = 2.0 * np.pi * config.freq_hz
    dg = DGParams(R_f=config.r_f, L_f=config.l_f, C_f=config.c_f,
                  R_c=config.r_c, L_c=config.l_c, omega_nom=omega,
                  n_d=config.n_d, m_d=config.m_d, v_star=config.v_star)
    loads = []

    def local_load(name, bus, P, Q):
        if P == 0.0 and Q == 0.0:
            return
        R, L = rated_load_impedance(P, Q, config.v_star, omega)
        loads.append(LoadBranch(name=name, bus=bus, R=R, L=L))

    def common_load(name, bus, P, Q, t_close, t_open):
        if P == 0.0 and Q == 0.0:
            return
        R, L = rated_load_impedance(P, Q, config.v_star, omega)
        schedule = []
        if np.isfinite(t_close):
            schedule.append((t_close, True))
        if np.isfinite(t_open):
            schedule.append((t_open, False))
        schedule.sort()
        loads.append(LoadBranch(name=name, bus=bus, R=R, L=L,
                                initially_closed=False, schedule=tuple(schedule)))

    local_load("ll1", 0, config.ll1_p, config.ll1_q)
    local_load("ll2", 1, config.ll2_p, config.ll2_q)
    local_load("ll3", 2, config.ll3_p, config.ll3_q)
    common_load("cl1", 1, config.cl1_p, config.cl1_q, config.s1_close, config.s1_open)
    common_load("cl2", 1, config.cl2_p, config.cl2_q, config.s2_close, config.s2_open)

    return Topology(
        dgs=(dg, dg, dg),
        dg_bus=(0, 1, 2),
        n_bus=3,
        lines=(LineBranch(0, 1, config.r_l1, config.l_l1),
               LineBranch(1, 2, config.r_l2, config.l_l2)),
        loads=tuple(loads),
        c_bus=config.c_bus,
        omega=omega,
    )


@dataclass
class Traces:
    """Decimated trace table plus the full-rate monitor channels."""

    columns: tuple
    data: np.ndarray
    times: np.ndarray            # monitor time grid (control steps)
    monitors: dict               # full-rate per-DG channels
    event_times: list            # per DG, seconds
    trigger_logs: list           # TriggerLog per DG
    switch_times: tuple          # schedule transition instants [s]
    engine: str
    y_final: np.ndarray = None   # full flat state at the end of the run
    n_plant: int = 0             # flat-state entries before the observer block


@dataclass
class Metrics:
    n_dg: int
    duration: float
    h: float
    control_dt: float
    baseline_rate: float
    per_dg_event_count: tuple
    total_packets: int
    reduction_ratio: float
    min_inter_event: float
    mean_inter_event: float
    max_steady_error: tuple      # per DG, over steady windows
    steady_exclusion: float      # window dropped after each switch [s]
    voltage_restoration_error: float
    reactive_sharing_spread: float
    settle_window: tuple         # [t0, t1] used for the two fields above
    engine: str

    def as_dict(self) -> dict:
        return asdict(self)


def communication_reduction(event_count: int, baseline_rate: float,
                            duration: float) -> float:
    """Event packets divided by the periodic baseline's packet count.

    A ratio above one (more events than the baseline would send) is
    anomalous for an event-triggered scheme; it is clamped to 1.0 and a
    warning is emitted.
    """
    if baseline_rate <= 0 or duration <= 0:
        raise ConfigError("baseline_rate and duration must be positive")
    baseline = baseline_rate * duration
    if baseline < 1.0:
        raise ConfigError("baseline schedule is empty (rate * duration < 1)")
    ratio = event_count / baseline
    if ratio > 1.0:
        warnings.warn(f"event count {event_count} exceeds the periodic baseline "
                      f"{baseline:.0f}; ratio clamped to 1.0")
        return 1.0
    return ratio


STEADY_EXCLUSION = 0.05   # settle window dropped after each switch [s]


def steady_mask(times: np.ndarray, switch_times, exclusion: float = STEADY_EXCLUSION):
    """True where t is outside every (t_sw, t_sw + exclusion] settle window."""
    mask = np.ones(times.size, dtype=bool)
    for t_sw in switch_times:
        mask &= ~((times > t_sw) & (times <= t_sw + exclusion))
    return mask


def run_scenario(config: ScenarioConfig):
    """Design, simulate and summarize one scenario; returns (Traces, Metrics)."""
    config.validate()
    topology = build_topology(config)
    ss = build_state_space(topology.dgs[0], topology.omega)
    design = design_observer(
        ss.A, ss.C, config.v_weight, config.w_scale * np.eye(6),
        config.qtilde_scale * np.eye(6), config.sigma, config.epsilon)
    designs = [design] * topology.n_dg
    inner = InnerGains(k_p=config.inner_kp, k_i=config.inner_ki, k_ad=config.inner_kad)
    sec_gains = SecondaryGains(k_pV=config.k_pv, k_iV=config.k_iv,
                               k_pQ=config.k_pq, k_iQ=config.k_iq)
    state0 = initial_state(topology, inner, observer_init=config.observer_init)

    if np.isfinite(config.secondary_enable):
        enable_step = int(round(config.secondary_enable / config.control_dt))
        if abs(enable_step * config.control_dt - config.secondary_enable) > 1e-9:
            raise ConfigError("secondary_enable is not on the control grid")
    else:
        enable_step = -1

    packed = pack_scenario(
        topology, inner, designs, sec_gains, enable_step,
        n_steps=config.n_steps, dt=config.control_dt, n_sub=config.n_sub,
        decimate=config.decimate, feed_live=1 if config.observer_feed == "live" else 0,
        state0=state0)
    try:
        raw = engine_mod.run_packed(packed, engine=config.engine)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    dt = config.control_dt
    times = np.arange(config.n_steps + 1) * dt
    event_times = [steps * dt for steps in raw.event_steps]
    logs = []
    for k, ev in enumerate(event_times):
        log = TriggerLog(dg_id=k + 1)
        log.times = list(ev)
        log.x_tk = raw.xk_final[k].copy()
        logs.append(log)

    switch_times = tuple(sorted(
        t for ld in topology.loads for t, _ in ld.schedule if t <= config.duration))
    traces = Traces(
        columns=tuple(trace_columns(topology)),
        data=raw.trace,
        times=times,
        monitors=raw.monitors,
        event_times=event_times,
        trigger_logs=logs,
        switch_times=switch_times,
        engine=raw.engine,
        y_final=raw.y_final,
        n_plant=packed.layout.off_obs,
    )
    metrics = compute_metrics(config, traces)
    return traces, metrics


def trace_columns(topology: Topology):
    cols = ["t"]
    n_dg = topology.n_dg
    for k in range(n_dg):
        cols += [f"dg{k + 1}_{s}" for s in STATE_NAMES]
    for k in range(n_dg):
        cols += [f"dg{k + 1}_{s}_hat" for s in STATE_NAMES]
    for quantity in ("eta", "trigger", "delta_v", "q", "q_hat"):
        cols += [f"dg{k + 1}_{quantity}" for k in range(n_dg)]
    for b in range(topology.n_bus):
        cols += [f"bus{b + 1}_vd", f"bus{b + 1}_vq"]
    return cols


def compute_metrics(config: ScenarioConfig, traces: Traces) -> Metrics:
    n_dg = len(traces.event_times)
    counts = tuple(len(ev) for ev in traces.event_times)
    total = int(sum(counts))
    ratio = communication_reduction(
        total, n_dg * config.baseline_rate, config.duration)

    gaps = [np.diff(ev) for ev in traces.event_times if len(ev) >= 2]
    all_gaps = np.concatenate(gaps) if gaps else np.array([])
    min_gap = float(all_gaps.min()) if all_gaps.size else float("inf")
    mean_gap = float(all_gaps.mean()) if all_gaps.size else 0.0

    mask = steady_mask(traces.times, traces.switch_times)
    e_norm = traces.monitors["e_norm"]
    max_steady = tuple(float(e_norm[mask, k].max()) for k in range(n_dg))

    if np.isfinite(config.secondary_enable):
        t0 = min(config.secondary_enable + 0.5, config.duration)
    else:
        t0 = max(0.0, config.duration - 0.5)
    window = traces.times >= t0
    vcd = traces.monitors["vcd"]
    v_mean = vcd[window].mean(axis=1)
    restoration = float(np.abs(v_mean - config.v_star).max())
    q_hat = traces.monitors["q_hat"][window]
    q_bar = q_hat.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        spread = np.abs(q_hat - q_bar[:, None]).max(axis=1) / np.abs(q_bar)
    spread = float(np.nanmax(spread)) if spread.size else float("nan")

    return Metrics(
        n_dg=n_dg,
        duration=config.duration,
        h=config.h,
        control_dt=config.control_dt,
        baseline_rate=config.baseline_rate,
        per_dg_event_count=counts,
        total_packets=total,
        reduction_ratio=ratio,
        min_inter_event=min_gap,
        mean_inter_event=mean_gap,
        max_steady_error=max_steady,
        steady_exclusion=STEADY_EXCLUSION,
        voltage_restoration_error=restoration,
        reactive_sharing_spread=spread,
        settle_window=(float(t0), float(config.duration)),
        engine=traces.engine,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_outputs(traces: Traces, metrics: Metrics, out_dir):
    """Write trace.csv, events.csv and metrics.json; returns the paths.

    Floats are rendered with shortest round-trip repr, so reruns of the
    same configuration yield byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    with open(trace_path, "w") as fh:
        fh.write(",".join(traces.columns) + "\n")
        for row in traces.data:
            fh.write(",".join(_fmt(v) for v in row) + "\n")

    events_path = out / "events.csv"
    pooled = sorted(
        (t, k + 1) for k, ev in enumerate(traces.event_times) for t in ev)
    with open(events_path, "w") as fh:
        fh.write("t_k,dg_id\n")
        for t, dg in pooled:
            fh.write(f"{_fmt(t)},{dg}\n")

    metrics_path = out / "metrics.json"
    payload = metrics.as_dict()
    payload["min_inter_event"] = (
        None if np.isinf(payload["min_inter_event"]) else payload["min_inter_event"])
    with open(metrics_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [trace_path, events_path, metrics_path]

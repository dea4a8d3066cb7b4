"""Event-held Luenberger observer replicas.

Each DG has one observer design; identical replicas of it run at the
sending DG and at every receiver.  A replica integrates

    dx_hat/dt = A x_hat + B u + d v_t + L (y_held - C x_hat)

between events, where y_held is the measurement carried by the last
event packet.  Replicas never exchange state: they stay synchronized
because they are deterministic functions of the same packet stream.

How u and v_t are fed between events is the harness's choice (live
feedforward by default, or frozen at the packet values); the replica
simply holds whatever it was last given.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PacketOrderError
from .model import StateSpace, VCD


@dataclass(frozen=True)
class EventPacket:
    """Payload broadcast by one DG at an event instant."""

    sender_id: int
    t_k: float            # event time [s]
    y: float              # v_cd(t_k) [V]
    u: tuple              # (v_sd, v_sq)(t_k) [V]
    v_t: tuple            # (v_td, v_tq)(t_k) [V]

    def __post_init__(self):
        values = (self.t_k, self.y) + tuple(self.u) + tuple(self.v_t)
        if not np.all(np.isfinite(values)):
            raise ValueError("event packet contains non-finite fields")


@dataclass
class ObserverReplica:
    """One copy of a DG's observer, driven purely by packets."""

    x_hat: np.ndarray = field(default_factory=lambda: np.zeros(6))
    y_held: float = 0.0
    u_held: np.ndarray = field(default_factory=lambda: np.zeros(2))
    vt_held: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_event_time: float = -np.inf


def apply_event(replica: ObserverReplica, packet: EventPacket) -> ObserverReplica:
    """Replace the held measurement/input samples with the packet contents.

    The estimate itself is continuous across events: only the held inputs
    jump.  Stale packets (t_k going backwards) are rejected; the simulated
    bus never reorders, so a violation means a harness bug.
    """
    if packet.t_k < replica.last_event_time:
        raise PacketOrderError(
            f"packet at t={packet.t_k} is older than last event "
            f"t={replica.last_event_time}")
    replica.y_held = float(packet.y)
    replica.u_held = np.asarray(packet.u, dtype=float).copy()
    replica.vt_held = np.asarray(packet.v_t, dtype=float).copy()
    replica.last_event_time = float(packet.t_k)
    return replica


def observer_derivative(replica: ObserverReplica, ss: StateSpace, L) -> np.ndarray:
    """Right-hand side of the replica ODE under the current held inputs."""
    L = np.asarray(L, dtype=float).reshape(-1)
    innovation = replica.y_held - replica.x_hat[VCD]
    return (ss.A @ replica.x_hat + ss.B @ replica.u_held
            + ss.d @ replica.vt_held + L * innovation)


def estimation_error(x, x_hat) -> np.ndarray:
    """Componentwise estimation error e = x - x_hat."""
    return np.asarray(x, dtype=float) - np.asarray(x_hat, dtype=float)

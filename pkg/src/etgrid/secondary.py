"""All-to-all averaging secondary voltage controller.

Every DG evaluates the same law from the shared estimate set: a PI on
the deviation of the estimated voltage average from v* (restoration,
common to all DGs) plus a PI on each DG's deviation from the average
estimated reactive power (sharing, differential).  The two branches sum
into the single droop correction delta_v per DG.
"""

from dataclasses import dataclass

import numpy as np

from .model import ICD, ICQ, VCD, VCQ, reactive_power


@dataclass(frozen=True)
class SecondaryGains:
    k_pV: float = 1.0      # voltage proportional [-]
    k_iV: float = 5.0      # voltage integral [1/s]
    k_pQ: float = 0.003    # reactive proportional [V/VAr]
    k_iQ: float = 0.4      # reactive integral [V/(VAr s)]

    def __post_init__(self):
        for name in ("k_pV", "k_iV", "k_pQ", "k_iQ"):
            if getattr(self, name) < 0:
                raise ValueError(f"SecondaryGains.{name} must be non-negative")


@dataclass
class SecondaryState:
    """Controller memory: per-DG integrators plus the enable gate."""

    int_v: np.ndarray                  # per-DG voltage-error integral [V s]
    int_q: np.ndarray                  # per-DG reactive-error integral [VAr s]
    enabled: bool = False
    enable_time: float = np.inf

    @classmethod
    def zeros(cls, n_dg: int, enable_time: float = np.inf) -> "SecondaryState":
        return cls(int_v=np.zeros(n_dg), int_q=np.zeros(n_dg),
                   enabled=False, enable_time=float(enable_time))


def q_hat(x_hat) -> float:
    """Estimated reactive power from an estimated DG state."""
    x_hat = np.asarray(x_hat, dtype=float)
    return reactive_power(x_hat[VCD], x_hat[VCQ], x_hat[ICD], x_hat[ICQ])


def integrator_clamp(v_star: float, k_i: float) -> float:
    """Anti-windup bound: integrators are held inside +/- 10 v* / k_i."""
    return 10.0 * v_star / k_i if k_i > 0 else np.inf


def secondary_step(estimates, v_star: float, gains: SecondaryGains,
                   state: SecondaryState, h: float):
    """Advance the controller one step and return (delta_v, state).

    ``estimates`` is one (v_cd_hat, Q_hat) pair per DG.  Integrators are
    advanced first (int += h * err), then delta_v uses the updated value.
    Before ``state.enable_time`` the controller is inert: delta_v = 0 and
    the integrators stay zero.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    estimates = [(float(v), float(q)) for v, q in estimates]
    if not estimates:
        raise ValueError("secondary_step needs at least one DG estimate")
    n = len(estimates)
    if state.int_v.shape != (n,) or state.int_q.shape != (n,):
        raise ValueError("SecondaryState size does not match the estimate set")
    if not state.enabled:
        return np.zeros(n), state

    v_hat = np.array([v for v, _ in estimates])
    q_est = np.array([q for _, q in estimates])
    e_v = v_star - v_hat.mean()                    # common restoration error
    e_q = q_est.mean() - q_est                     # per-DG sharing error

    state.int_v += h * e_v
    state.int_q += h * e_q
    cv = integrator_clamp(v_star, gains.k_iV)
    cq = integrator_clamp(v_star, gains.k_iQ)
    np.clip(state.int_v, -cv, cv, out=state.int_v)
    np.clip(state.int_q, -cq, cq, out=state.int_q)

    delta_v = (gains.k_pV * e_v + gains.k_iV * state.int_v
               + gains.k_pQ * e_q + gains.k_iQ * state.int_q)
    return delta_v, state

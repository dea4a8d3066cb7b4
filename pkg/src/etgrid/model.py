"""Per-unit distributed generator model in the synchronous dq frame.

One DG is an averaged inverter behind an LC filter and an RL output
branch.  Its six states are

    x = [i_fd, i_fq, v_cd, v_cq, i_cd, i_cq]

(filter current, capacitor voltage, output current, d/q components).
The input is the inverter voltage u = (v_sd, v_sq); the terminal (bus)
voltage v_t enters as a known coupling term.  The measured output is
v_cd alone.
"""

from dataclasses import dataclass

import numpy as np

# state indices
IFD, IFQ, VCD, VCQ, ICD, ICQ = range(6)

STATE_NAMES = ("ifd", "ifq", "vcd", "vcq", "icd", "icq")


@dataclass(frozen=True)
class DGParams:
    """Physical constants of one DG unit."""

    R_f: float = 0.1        # filter resistance [ohm]
    L_f: float = 1.8e-3     # filter inductance [H]
    C_f: float = 3e-6       # filter capacitance [F]
    R_c: float = 0.1        # output (connector) resistance [ohm]
    L_c: float = 1.8e-3     # output inductance [H]
    omega_nom: float = 2 * np.pi * 50.0   # nominal angular frequency [rad/s]
    n_d: float = 1.3e-3     # volt/VAr droop coefficient [V/VAr]
    m_d: float = 9.4e-5     # P-omega droop coefficient, stored but unused [rad/s/W]
    v_star: float = 311.0   # reference voltage magnitude [V]

    def __post_init__(self):
        for name in ("R_f", "L_f", "C_f", "R_c", "L_c", "omega_nom", "v_star"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"DGParams.{name} must be strictly positive, got {value!r}")
        for name in ("n_d", "m_d"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"DGParams.{name} must be non-negative, got {value!r}")


@dataclass(frozen=True)
class StateSpace:
    """Six-state LTI realization  dx/dt = A x + B u + d v_t,  y = C x."""

    A: np.ndarray   # 6x6
    B: np.ndarray   # 6x2, nonzero only in rows 0-1
    d: np.ndarray   # 6x2, nonzero only in rows 4-5
    C: np.ndarray   # 1x6, selects v_cd


def build_state_space(params: DGParams, omega: float) -> StateSpace:
    """Assemble the A, B, d, C matrices for one DG.

    ``omega`` is the (common) synchronous frame speed in rad/s.  Rows/columns
    are 0-based here; documentation elsewhere uses 1-based indices.
    """
    if not (np.isfinite(omega) and omega > 0):
        raise ValueError(f"omega must be strictly positive, got {omega!r}")
    p = params  # validated by the dataclass
    A = np.array([
        [-p.R_f / p.L_f,  omega,          -1 / p.L_f,      0.0,            0.0,            0.0],
        [-omega,          -p.R_f / p.L_f,  0.0,           -1 / p.L_f,      0.0,            0.0],
        [1 / p.C_f,        0.0,            0.0,            omega,         -1 / p.C_f,      0.0],
        [0.0,              1 / p.C_f,     -omega,          0.0,            0.0,           -1 / p.C_f],
        [0.0,              0.0,            1 / p.L_c,      0.0,           -p.R_c / p.L_c,  omega],
        [0.0,              0.0,            0.0,            1 / p.L_c,     -omega,         -p.R_c / p.L_c],
    ])
    B = np.zeros((6, 2))
    B[IFD, 0] = 1 / p.L_f
    B[IFQ, 1] = 1 / p.L_f
    d = np.zeros((6, 2))
    d[ICD, 0] = -1 / p.L_c
    d[ICQ, 1] = -1 / p.L_c
    C = np.zeros((1, 6))
    C[0, VCD] = 1.0
    return StateSpace(A=A, B=B, d=d, C=C)


def reactive_power(v_cd: float, v_cq: float, i_cd: float, i_cq: float) -> float:
    """Instantaneous reactive power Q = v_cq*i_cd - v_cd*i_cq [VAr]."""
    return v_cq * i_cd - v_cd * i_cq


def active_power(v_cd: float, v_cq: float, i_cd: float, i_cq: float) -> float:
    """Instantaneous active power P = v_cd*i_cd + v_cq*i_cq [W]."""
    return v_cd * i_cd + v_cq * i_cq


def droop_voltage_ref(v_star: float, n_d: float, Q: float, delta_v: float) -> float:
    """Droop-adjusted voltage reference  v* - n_d*Q + delta_v  [V]."""
    return v_star - n_d * Q + delta_v

"""Event-trigger mechanism.

The trigger watches two error signals per DG: the estimation error
e = x - x_hat and the drift tilde_e = x - x(t_k) since the last event.
It fires when the quadratic form

    eta = [e' tilde_e'] Psi [e; tilde_e]
        = (sigma - 1) e' Qt e + 2 e' P L C tilde_e

reaches zero from below while e lies outside the dead ball of radius
epsilon.  In this discrete-time realization eta is sampled once per
control step, so inter-event times are bounded below by the step and
Zeno behavior is excluded by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import VCD


@dataclass(frozen=True)
class PsiMatrix:
    """Block matrix [[ (sigma-1) Qt, P L C ], [ (P L C)', 0 ]] of the trigger form."""

    full: np.ndarray       # 2n x 2n, symmetric
    Q_tilde: np.ndarray    # n x n
    sigma: float
    pl: np.ndarray         # P @ L as a flat n-vector (cross-term factor)

    @property
    def n(self) -> int:
        return self.Q_tilde.shape[0]


def assemble_psi(Q_tilde, sigma: float, P, L, C) -> PsiMatrix:
    """Build the trigger's block quadratic form from the observer design."""
    if not (0.0 < sigma < 1.0):
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    Q_tilde = np.atleast_2d(np.asarray(Q_tilde, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    L = np.asarray(L, dtype=float).reshape(-1, 1)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = Q_tilde.shape[0]
    if P.shape != (n, n) or L.shape != (n, 1) or C.shape != (1, n):
        raise ValueError(
            f"inconsistent dimensions: Qt {Q_tilde.shape}, P {P.shape}, "
            f"L {L.shape}, C {C.shape}")
    cross = P @ L @ C                   # n x n, rank one
    full = np.zeros((2 * n, 2 * n))
    full[:n, :n] = (sigma - 1.0) * Q_tilde
    full[:n, n:] = cross
    full[n:, :n] = cross.T
    full = 0.5 * (full + full.T)        # exact symmetry
    return PsiMatrix(full=full, Q_tilde=Q_tilde, sigma=sigma,
                     pl=(P @ L).reshape(-1))


def eta(e, e_tilde, psi: PsiMatrix) -> float:
    """Trigger quadratic form (sigma-1) e'Qt e + 2 e'PL (C e_tilde)."""
    e = np.asarray(e, dtype=float)
    e_tilde = np.asarray(e_tilde, dtype=float)
    return float((psi.sigma - 1.0) * (e @ psi.Q_tilde @ e)
                 + 2.0 * (e @ psi.pl) * e_tilde[VCD])


def should_trigger(e, e_tilde, psi: PsiMatrix, epsilon: float) -> bool:
    """Event condition: eta >= 0 and ||e||_2 outside the epsilon ball."""
    if not (epsilon > 0.0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if float(np.linalg.norm(np.asarray(e, dtype=float))) <= epsilon:
        return False
    return eta(e, e_tilde, psi) >= 0.0


@dataclass
class TriggerLog:
    """Per-DG record of event instants plus the current held snapshot."""

    dg_id: int
    times: list = field(default_factory=list)
    x_tk: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def record(self, t: float, x):
        if self.times and t <= self.times[-1]:
            raise ValueError(
                f"event time {t} does not increase past {self.times[-1]}")
        self.times.append(float(t))
        self.x_tk = np.asarray(x, dtype=float).copy()

    @property
    def count(self) -> int:
        return len(self.times)


def inter_event_stats(log: TriggerLog):
    """(count, min_gap, mean_gap) of a trigger log.

    Conventions for degenerate logs: no gaps exist with fewer than two
    events, so min_gap is +inf ("no gaps") and mean_gap is 0.0.
    """
    times = np.asarray(log.times, dtype=float)
    if times.size and np.any(np.diff(times) <= 0):
        raise ValueError("trigger log times are not strictly increasing")
    if times.size < 2:
        return (int(times.size), np.inf, 0.0)
    gaps = np.diff(times)
    return (int(times.size), float(gaps.min()), float(gaps.mean()))

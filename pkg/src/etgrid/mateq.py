"""Matrix-equation solvers for the observer design.

Everything here is sized for single-DG design work (n <= ~10), so the
Lyapunov equation is solved directly through its Kronecker-sum linear
system and the filter Riccati equation through Kleinman-Newton iteration
on top of that Lyapunov solver.  Both certificates (Hurwitz closed loop,
residual norms) are checked on every accepted solution.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, MatrixEquationError, ObservabilityError

# A matrix is accepted as Hurwitz when every eigenvalue real part is
# below -HURWITZ_TOL.
HURWITZ_TOL = 1e-9

# Rank decisions in observability_rank use RANK_RTOL * largest singular value.
RANK_RTOL = 1e-8

LYAP_RESIDUAL_RTOL = 1e-9
RICCATI_RESIDUAL_RTOL = 1e-8
RICCATI_MAX_ITER = 200


@dataclass(frozen=True)
class ObserverDesign:
    """Solved observer matrices plus the trigger tuning scalars."""

    S: np.ndarray        # filter Riccati solution, SPD
    L: np.ndarray        # observer gain, n x 1
    P: np.ndarray        # Lyapunov certificate for A - L C, SPD
    Q_tilde: np.ndarray  # Lyapunov weight, SPD
    V: float             # measurement weight, > 0
    W: np.ndarray        # process weight, PSD
    sigma: float         # decrease-rate fraction, in (0, 1)
    epsilon: float       # trigger dead-ball radius, > 0


def _as_square(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise MatrixEquationError(f"{name} must be square, got shape {M.shape}")
    return M


def observability_rank(A, C) -> int:
    """Rank of the stacked observability matrix [C; CA; ...; CA^(n-1)].

    Each nonzero row is scaled to unit norm before the SVD rank decision
    (relative tolerance ``RANK_RTOL``); without that scaling the test is
    meaningless for stiff systems whose C A^k rows grow by ~||A|| per
    power and span dozens of decades.
    """
    A = _as_square(A, "A")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if C.shape[1] != n:
        raise MatrixEquationError(f"C has {C.shape[1]} columns, expected {n}")
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    obs = np.vstack(blocks)
    norms = np.linalg.norm(obs, axis=1, keepdims=True)
    obs = obs / np.where(norms > 0.0, norms, 1.0)
    sv = np.linalg.svd(obs, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def is_detectable(A, C, tol: float = RANK_RTOL) -> bool:
    """PBH detectability test: every non-decaying mode must be observable.

    For each eigenvalue with Re >= -HURWITZ_TOL the stacked matrix
    [lambda I - A; C] must have full column rank (smallest singular value
    above tol * ||A||_2).  Stable unobservable modes are allowed; the
    estimation error then converges at their own rate.
    """
    A = _as_square(A, "A")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    scale = np.linalg.norm(A, 2)
    for lam in np.linalg.eigvals(A):
        if lam.real < -HURWITZ_TOL:
            continue
        stacked = np.vstack([lam * np.eye(A.shape[0]) - A, C.astype(complex)])
        sv = np.linalg.svd(stacked, compute_uv=False)
        if sv[-1] <= tol * max(scale, 1.0):
            return False
    return True


def is_hurwitz(M, tol: float = HURWITZ_TOL) -> bool:
    """True iff every eigenvalue of M has real part < -tol."""
    M = _as_square(M, "M")
    if not np.all(np.isfinite(M)):
        raise MatrixEquationError("is_hurwitz received a non-finite matrix")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise MatrixEquationError(f"eigenvalue computation failed: {exc}") from exc
    return bool(np.all(eigs.real < -tol))


def _lyap_kron(F, Q):
    """Raw Kronecker-sum solve of F'P + PF = -Q (no definiteness checks)."""
    n = F.shape[0]
    K = np.kron(np.eye(n), F.T) + np.kron(F.T, np.eye(n))
    try:
        vec = np.linalg.solve(K, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise MatrixEquationError(
            "Lyapunov system is singular (F likely not Hurwitz)") from exc
    P = vec.reshape(n, n)
    return 0.5 * (P + P.T)


def solve_lyapunov(F, Q) -> np.ndarray:
    """Solve F'P + PF = -Q for symmetric Q > 0, F Hurwitz.

    Direct vectorized solve of the n^2 x n^2 Kronecker-sum system; the
    returned P is symmetrized and the relative residual is verified
    against ``LYAP_RESIDUAL_RTOL``.
    """
    F = _as_square(F, "F")
    Q = _as_square(Q, "Q")
    if F.shape != Q.shape:
        raise MatrixEquationError(f"F {F.shape} and Q {Q.shape} differ in size")
    P = _lyap_kron(F, Q)
    residual = np.linalg.norm(F.T @ P + P @ F + Q) / np.linalg.norm(Q)
    if not np.isfinite(residual) or residual > LYAP_RESIDUAL_RTOL:
        raise MatrixEquationError(
            f"Lyapunov solve residual {residual:.3e} exceeds {LYAP_RESIDUAL_RTOL:.0e} "
            "(is F Hurwitz and Q well conditioned?)")
    return P


def _unobservable_basis(A, C):
    """Orthonormal basis of the unobservable subspace (may have 0 columns)."""
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    obs = np.vstack(blocks)
    norms = np.linalg.norm(obs, axis=1, keepdims=True)
    obs = obs / np.where(norms > 0.0, norms, 1.0)
    _, sv, vt = np.linalg.svd(obs)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
    return vt[rank:].T


def _bass_gain(A, C):
    """Bass shift method; requires (A, C) observable.

    The shift must exceed -min Re eig(A) so that A + beta I is completely
    unstable.  Shift size trades Gramian conditioning against closed-loop
    margin, so a ladder of candidates is tried and the first verified
    Hurwitz gain wins.
    """
    n = A.shape[0]
    abscissa = float(np.max(-np.linalg.eigvals(A).real))
    norm = np.linalg.norm(A, ord=np.inf) + 1.0
    candidates = [abscissa + 0.5 * norm, 2.0 * norm, abscissa + 0.05 * norm,
                  4.0 * norm, 16.0 * norm, 64.0 * norm]
    for beta in candidates:
        if beta <= abscissa:
            continue
        F = -A - beta * np.eye(n)
        try:
            Z = _lyap_kron(F, 2.0 * (C.T @ C))
            L0 = np.linalg.solve(Z, C.T)
        except (MatrixEquationError, np.linalg.LinAlgError):
            continue
        if is_hurwitz(A - L0 @ C):
            return L0
    raise MatrixEquationError("failed to construct a stabilizing initial gain")


def _stabilizing_gain(A, C):
    """Initial observer gain with A - L0 C Hurwitz for any detectable pair.

    Stable unobservable modes are left alone: the Bass gain is computed on
    the observable subsystem of the Kalman decomposition and lifted back,
    which keeps the closed loop block triangular.
    """
    n = A.shape[0]
    if is_hurwitz(A):
        return np.zeros((n, C.shape[0]))
    U_u = _unobservable_basis(A, C)
    if U_u.shape[1] == 0:
        return _bass_gain(A, C)
    _, _, vt = np.linalg.svd(U_u.T)
    U_o = vt[U_u.shape[1]:].T          # orthonormal complement
    A_oo = U_o.T @ A @ U_o
    C_o = C @ U_o
    L_oo = _bass_gain(A_oo, C_o)
    L0 = U_o @ L_oo
    if not is_hurwitz(A - L0 @ C):
        raise MatrixEquationError(
            "failed to construct a stabilizing initial gain (pair detectable?)")
    return L0


def solve_filter_riccati(A, C, V, W, max_iter: int = RICCATI_MAX_ITER,
                         require_spd_w: bool = True) -> np.ndarray:
    """Solve the filter algebraic Riccati equation

        A S + S A' - S C' V^-1 C S + W = 0

    by Kleinman-Newton iteration: starting from a stabilizing gain L0,
    repeatedly solve the Lyapunov equation

        (A - L C) S + S (A - L C)' + L V L' + W = 0,   L <- S C' / V

    until the residual norm falls below RICCATI_RESIDUAL_RTOL * max(1, ||W||).

    (A, C) must be detectable; stable unobservable modes are fine (the
    gain simply leaves them alone), an undetectable pair is an error.
    """
    A = _as_square(A, "A")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    W = _as_square(W, "W")
    V = float(np.asarray(V).reshape(()))
    n = A.shape[0]
    if C.shape != (1, n):
        raise MatrixEquationError(f"C must be 1x{n}, got {C.shape}")
    if V <= 0:
        raise MatrixEquationError(f"V must be positive, got {V}")
    w_eigs = np.linalg.eigvalsh(0.5 * (W + W.T))
    if require_spd_w:
        if w_eigs.min() <= 0:
            raise MatrixEquationError(
                "W must be symmetric positive-definite (pass require_spd_w=False "
                "to accept a PSD W at your own risk)")
    elif w_eigs.min() < -RANK_RTOL * max(w_eigs.max(), 1.0):
        raise MatrixEquationError("W must be at least positive-semidefinite")
    if not is_detectable(A, C):
        raise ObservabilityError(
            "(A, C) is not detectable: an unstable mode is invisible from the "
            f"output (observability rank {observability_rank(A, C)} of {n})")

    tol = RICCATI_RESIDUAL_RTOL * max(1.0, np.linalg.norm(W))
    L = _stabilizing_gain(A, C)
    S = None
    residual = prev_residual = np.inf
    for iteration in range(1, max_iter + 1):
        Acl = A - L @ C
        # F'S + SF = -Q with F = Acl',  Q = L V L' + W
        S = _lyap_kron(Acl.T, L @ L.T * V + W)
        L_new = S @ C.T / V
        # Kleinman's guarantee needs every iterate stabilizing; under
        # rounding a full step can lose that, so damp back towards the
        # previous gain until the closed loop is Hurwitz again.
        for _ in range(60):
            if is_hurwitz(A - L_new @ C):
                break
            L_new = 0.5 * (L_new + L)
        else:
            raise ConvergenceError(
                "filter Riccati iteration lost its stabilizing iterate",
                residual=residual, iterations=iteration)
        L = L_new
        residual = np.linalg.norm(A @ S + S @ A.T - S @ C.T @ C @ S / V + W)
        # once inside tolerance, polish until the quadratic convergence
        # stagnates so scalar cases reach closed-form accuracy
        if residual <= tol and residual > 0.1 * prev_residual:
            break
        prev_residual = residual
    else:
        if residual > tol:
            raise ConvergenceError(
                f"filter Riccati did not converge in {max_iter} iterations "
                f"(residual {residual:.3e} > {tol:.3e})",
                residual=residual, iterations=max_iter)

    S = 0.5 * (S + S.T)
    s_eigs = np.linalg.eigvalsh(S)
    if require_spd_w:
        if s_eigs.min() <= 0:
            raise MatrixEquationError("Riccati solution S is not positive definite")
    elif s_eigs.min() < -RANK_RTOL * max(1.0, s_eigs.max()):
        # a PSD W only guarantees a PSD solution
        raise MatrixEquationError("Riccati solution S is indefinite")
    if not is_hurwitz(A - (S @ C.T / V) @ C):
        raise MatrixEquationError("A - LC is not Hurwitz for the converged S")
    return S


def observer_gain(S, C, V) -> np.ndarray:
    """Observer gain L = S C' V^-1 as an n x 1 column."""
    S = _as_square(S, "S")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape != (1, S.shape[0]):
        raise MatrixEquationError(f"C must be 1x{S.shape[0]}, got {C.shape}")
    V = float(np.asarray(V).reshape(()))
    return S @ C.T / V


def design_observer(A, C, V, W, Q_tilde, sigma: float, epsilon: float) -> ObserverDesign:
    """Full observer design: Riccati gain plus the Lyapunov certificate.

    Raises with context naming the failing equation; validates the trigger
    scalars sigma in (0, 1) and epsilon > 0.
    """
    if not (0.0 < sigma < 1.0):
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    if not (epsilon > 0.0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    Q_tilde = _as_square(Q_tilde, "Q_tilde")
    if np.linalg.eigvalsh(0.5 * (Q_tilde + Q_tilde.T)).min() <= 0:
        raise MatrixEquationError("Q_tilde must be symmetric positive-definite")
    try:
        S = solve_filter_riccati(A, C, V, W)
    except MatrixEquationError as exc:
        raise type(exc)(f"filter Riccati equation failed: {exc}") from exc
    L = observer_gain(S, C, V)
    A = _as_square(A, "A")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Acl = A - L @ C
    try:
        P = solve_lyapunov(Acl, Q_tilde)
    except MatrixEquationError as exc:
        raise type(exc)(f"Lyapunov equation for P failed: {exc}") from exc
    if np.linalg.eigvalsh(P).min() <= 0:
        raise MatrixEquationError("Lyapunov certificate P is not positive definite")
    return ObserverDesign(S=S, L=L, P=P, Q_tilde=Q_tilde,
                          V=float(np.asarray(V).reshape(())),
                          W=_as_square(W, "W"), sigma=sigma, epsilon=epsilon)

"""Pure-Python engine.

Within one control step the coupled plant+observer system is affine,
dy/dt = M y + G w, where w collects the step-constant inputs (controls
and held packet samples).  One RK4 substep of an affine system is the
exact matrix polynomial

    y+ = E y + F (G w),   E = I + A + A^2/2 + A^3/6 + A^4/24,
                          F = h (I + A/2 + A^2/6 + A^3/24),  A = h M,

so each substep is two matvecs instead of four right-hand-side sweeps.
The compiled engine evaluates the same RK4 map stage by stage; the two
paths agree to rounding and are cross-checked in the test suite.
"""

import numpy as np

from ..errors import IntegrationDivergedError
from .packed import MONITOR_KEYS, PackedScenario, RawRun, trace_row_count, trace_width

ENGINE_NAME = "python"

# w layout: [u (2 n_dg) | y_held (n_dg) | u_held (2 n_dg) | vt_held (2 n_dg)]


def _w_size(n_dg):
    return 7 * n_dg


def rhs_reference(p: PackedScenario, y, u, conn, y_held, u_held, vt_held):
    """Straightforward evaluation of the coupled right-hand side.

    Only used to assemble the affine maps and by tests; the stepping loop
    never calls it directly.
    """
    lay = p.layout
    om = p.omega
    dy = np.zeros(lay.n_state)
    ob = lay.off_bus
    inj = np.zeros(2 * lay.n_bus)
    for k in range(lay.n_dg):
        i0 = 6 * k
        b = p.dg_bus[k]
        x = y[i0:i0 + 6]
        dy[i0 + 0] = (-p.R_f[k] * x[0] - x[2] + u[2 * k]) / p.L_f[k] + om * x[1]
        dy[i0 + 1] = (-p.R_f[k] * x[1] - x[3] + u[2 * k + 1]) / p.L_f[k] - om * x[0]
        dy[i0 + 2] = (x[0] - x[4]) / p.C_f[k] + om * x[3]
        dy[i0 + 3] = (x[1] - x[5]) / p.C_f[k] - om * x[2]
        dy[i0 + 4] = (x[2] - p.R_c[k] * x[4] - y[ob + 2 * b]) / p.L_c[k] + om * x[5]
        dy[i0 + 5] = (x[3] - p.R_c[k] * x[5] - y[ob + 2 * b + 1]) / p.L_c[k] - om * x[4]
        inj[2 * b] += x[4]
        inj[2 * b + 1] += x[5]
    for j in range(lay.n_line):
        i0 = lay.off_line + 2 * j
        a, b = p.line_a[j], p.line_b[j]
        i_d, i_q = y[i0], y[i0 + 1]
        dy[i0] = (y[ob + 2 * a] - y[ob + 2 * b] - p.line_R[j] * i_d) / p.line_L[j] + om * i_q
        dy[i0 + 1] = (y[ob + 2 * a + 1] - y[ob + 2 * b + 1] - p.line_R[j] * i_q) / p.line_L[j] - om * i_d
        inj[2 * a] -= i_d
        inj[2 * a + 1] -= i_q
        inj[2 * b] += i_d
        inj[2 * b + 1] += i_q
    for j in range(lay.n_load):
        if not conn[j]:
            continue
        i0 = lay.off_load + 2 * j
        b = p.load_bus[j]
        i_d, i_q = y[i0], y[i0 + 1]
        dy[i0] = (y[ob + 2 * b] - p.load_R[j] * i_d) / p.load_L[j] + om * i_q
        dy[i0 + 1] = (y[ob + 2 * b + 1] - p.load_R[j] * i_q) / p.load_L[j] - om * i_d
        inj[2 * b] -= i_d
        inj[2 * b + 1] -= i_q
    for b in range(lay.n_bus):
        dy[ob + 2 * b] = om * y[ob + 2 * b + 1] + inj[2 * b] / p.c_bus
        dy[ob + 2 * b + 1] = -om * y[ob + 2 * b] + inj[2 * b + 1] / p.c_bus
    for k in range(lay.n_dg):
        i0 = lay.off_obs + 6 * k
        b = p.dg_bus[k]
        xh = y[i0:i0 + 6]
        if p.feed_live:
            vtd, vtq = y[ob + 2 * b], y[ob + 2 * b + 1]
        else:
            vtd, vtq = vt_held[2 * k], vt_held[2 * k + 1]
        ud, uq = u_held[2 * k], u_held[2 * k + 1]
        innov = y_held[k] - xh[2]
        L = p.L_gain[k]
        dy[i0 + 0] = (-p.R_f[k] * xh[0] - xh[2] + ud) / p.L_f[k] + om * xh[1] + L[0] * innov
        dy[i0 + 1] = (-p.R_f[k] * xh[1] - xh[3] + uq) / p.L_f[k] - om * xh[0] + L[1] * innov
        dy[i0 + 2] = (xh[0] - xh[4]) / p.C_f[k] + om * xh[3] + L[2] * innov
        dy[i0 + 3] = (xh[1] - xh[5]) / p.C_f[k] - om * xh[2] + L[3] * innov
        dy[i0 + 4] = (xh[2] - p.R_c[k] * xh[4] - vtd) / p.L_c[k] + om * xh[5] + L[4] * innov
        dy[i0 + 5] = (xh[3] - p.R_c[k] * xh[5] - vtq) / p.L_c[k] - om * xh[4] + L[5] * innov
    return dy


def _affine_maps(p: PackedScenario, conn):
    """(M, G) with dy = M y + G w for the given switch configuration."""
    lay = p.layout
    n, m = lay.n_state, _w_size(lay.n_dg)
    n_dg = lay.n_dg
    zero_w = np.zeros(m)
    M = np.empty((n, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        M[:, j] = rhs_reference(p, basis, zero_w[:2 * n_dg],
                                conn, zero_w[:n_dg], zero_w[:2 * n_dg],
                                zero_w[:2 * n_dg])
        basis[j] = 0.0
    G = np.empty((n, m))
    zero_y = np.zeros(n)
    w = np.zeros(m)
    for j in range(m):
        w[j] = 1.0
        G[:, j] = rhs_reference(p, zero_y, w[:2 * n_dg], conn,
                                w[2 * n_dg:3 * n_dg],
                                w[3 * n_dg:5 * n_dg],
                                w[5 * n_dg:7 * n_dg])
        w[j] = 0.0
    return M, G


def _propagators(M, h):
    """Exact RK4 substep maps (E, F) for dy = M y + b at step h."""
    n = M.shape[0]
    A = h * M
    A2 = A @ A
    A3 = A2 @ A
    A4 = A3 @ A
    E = np.eye(n) + A + A2 / 2.0 + A3 / 6.0 + A4 / 24.0
    F = h * (np.eye(n) + A / 2.0 + A2 / 6.0 + A3 / 24.0)
    return E, F


def run_packed(p: PackedScenario) -> RawRun:
    """Run the full scenario loop; see the compiled kernel for the spec."""
    lay = p.layout
    n_dg = lay.n_dg
    ob, ol = lay.off_bus, lay.off_obs
    n_mon = p.n_steps + 1

    y = p.y0.copy()
    integ = p.integ0.copy()
    conn = p.conn0.astype(bool).copy()
    y_held = np.zeros(n_dg)
    u_held = np.zeros(2 * n_dg)
    vt_held = np.zeros(2 * n_dg)
    xk = np.zeros((n_dg, 6))
    int_v = np.zeros(n_dg)
    int_q = np.zeros(n_dg)
    u = np.zeros(2 * n_dg)
    dv = np.zeros(n_dg)

    mon = {key: np.zeros((n_mon, n_dg)) for key in MONITOR_KEYS}
    trace = np.zeros((trace_row_count(p.n_steps, p.decimate), trace_width(lay)))
    event_steps = [np.zeros(n_mon, dtype=np.int64) for _ in range(n_dg)]
    n_events = [0] * n_dg

    cache = {}

    def maps_for(conn_arr):
        key = conn_arr.tobytes()
        if key not in cache:
            M, G = _affine_maps(p, conn_arr)
            E, F = _propagators(M, p.h_sub)
            cache[key] = (M, G, E, F @ G)
        return cache[key]

    M, G, E, FG = maps_for(conn)
    w = np.zeros(_w_size(n_dg))
    sp = 0
    n_sched = p.sched_step.size

    for i in range(p.n_steps + 1):
        # switch transitions scheduled for this control step
        changed = False
        while sp < n_sched and p.sched_step[sp] == i:
            j = int(p.sched_load[sp])
            new_state = bool(p.sched_closed[sp])
            if conn[j] and not new_state:
                y[lay.off_load + 2 * j] = 0.0
                y[lay.off_load + 2 * j + 1] = 0.0
            if conn[j] != new_state:
                conn[j] = new_state
                changed = True
            sp += 1
        if changed:
            M, G, E, FG = maps_for(conn)

        x = y[:6 * n_dg].reshape(n_dg, 6)
        xh = y[ol:ol + 6 * n_dg].reshape(n_dg, 6)

        # secondary controller
        if 0 <= p.enable_step <= i:
            q_h = xh[:, 3] * xh[:, 4] - xh[:, 2] * xh[:, 5]
            e_v = p.v_star_sec - xh[:, 2].mean()
            e_q = q_h.mean() - q_h
            int_v += p.dt * e_v
            int_q += p.dt * e_q
            np.clip(int_v, -p.clamp_v, p.clamp_v, out=int_v)
            np.clip(int_q, -p.clamp_q, p.clamp_q, out=int_q)
            dv = p.kpV * e_v + p.kiV * int_v + p.kpQ * e_q + p.kiQ * int_q
        else:
            dv = np.zeros(n_dg)

        # droop + inner voltage loop
        q_true = x[:, 3] * x[:, 4] - x[:, 2] * x[:, 5]
        v_ref = p.v_star - p.n_d * q_true + dv
        e_d = v_ref - x[:, 2]
        e_q2 = -x[:, 3]
        integ[:, 0] += p.dt * e_d
        integ[:, 1] += p.dt * e_q2
        u[0::2] = p.kp * e_d + p.ki * integ[:, 0] - p.kad * (x[:, 0] - x[:, 4])
        u[1::2] = p.kp * e_q2 + p.ki * integ[:, 1] - p.kad * (x[:, 1] - x[:, 5])
        if p.feed_live:
            u_held[:] = u
            for k in range(n_dg):
                b = p.dg_bus[k]
                vt_held[2 * k] = y[ob + 2 * b]
                vt_held[2 * k + 1] = y[ob + 2 * b + 1]

        # event-trigger mechanism
        q_h = xh[:, 3] * xh[:, 4] - xh[:, 2] * xh[:, 5]
        for k in range(n_dg):
            e = x[k] - xh[k]
            eta_k = ((p.sigma - 1.0) * (e @ p.Q_t @ e)
                     + 2.0 * (e @ p.PL[k]) * (x[k, 2] - xk[k, 2]))
            e_norm = float(np.sqrt(e @ e))
            fire = (i == 0) or (eta_k >= 0.0 and e_norm > p.epsilon)
            if fire:
                event_steps[k][n_events[k]] = i
                n_events[k] += 1
                y_held[k] = x[k, 2]
                if not p.feed_live:
                    u_held[2 * k] = u[2 * k]
                    u_held[2 * k + 1] = u[2 * k + 1]
                    b = p.dg_bus[k]
                    vt_held[2 * k] = y[ob + 2 * b]
                    vt_held[2 * k + 1] = y[ob + 2 * b + 1]
                xk[k] = x[k]
            mon["e_norm"][i, k] = e_norm
            mon["eta"][i, k] = eta_k
            mon["trig"][i, k] = 1.0 if fire else 0.0
            mon["v_lyap"][i, k] = e @ p.P[k] @ e
            mon["eqe"][i, k] = e @ p.Q_t @ e
            mon["vcd"][i, k] = x[k, 2]
            mon["q"][i, k] = q_true[k]
            mon["q_hat"][i, k] = q_h[k]
            mon["delta_v"][i, k] = dv[k]

        # step-start derivative: dV/dt monitor, shared by tests
        w[:2 * n_dg] = u
        w[2 * n_dg:3 * n_dg] = y_held
        w[3 * n_dg:5 * n_dg] = u_held
        w[5 * n_dg:7 * n_dg] = vt_held
        b_vec = G @ w
        f0 = M @ y + b_vec
        for k in range(n_dg):
            e = x[k] - xh[k]
            de = f0[6 * k:6 * k + 6] - f0[ol + 6 * k:ol + 6 * k + 6]
            mon["dvdt"][i, k] = 2.0 * (e @ p.P[k] @ de)

        if i % p.decimate == 0:
            row = trace[i // p.decimate]
            row[0] = i * p.dt
            row[1:1 + 6 * n_dg] = y[:6 * n_dg]
            row[1 + 6 * n_dg:1 + 12 * n_dg] = y[ol:ol + 6 * n_dg]
            base = 1 + 12 * n_dg
            row[base:base + n_dg] = mon["eta"][i]
            row[base + n_dg:base + 2 * n_dg] = mon["trig"][i]
            row[base + 2 * n_dg:base + 3 * n_dg] = dv
            row[base + 3 * n_dg:base + 4 * n_dg] = q_true
            row[base + 4 * n_dg:base + 5 * n_dg] = q_h
            row[base + 5 * n_dg:base + 5 * n_dg + 2 * lay.n_bus] = y[ob:ob + 2 * lay.n_bus]

        if i < p.n_steps:
            fb = FG @ w
            for _ in range(p.n_sub):
                y = E @ y + fb
            if not np.all(np.isfinite(y)):
                bad = int(np.argmin(np.isfinite(y)))
                raise IntegrationDivergedError(
                    f"integration diverged at t={(i + 1) * p.dt:.6f} s "
                    f"(flat state component {bad})",
                    t=(i + 1) * p.dt, component=bad)

    return RawRun(
        event_steps=[event_steps[k][:n_events[k]].copy() for k in range(n_dg)],
        monitors=mon,
        trace=trace,
        y_final=y,
        integ_final=integ,
        xk_final=xk.copy(),
        engine=ENGINE_NAME,
    )

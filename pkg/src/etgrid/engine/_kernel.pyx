# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled engine: stage-wise RK4 over the coupled plant+observer system.

Semantics are step-for-step identical to the pure-Python engine in
python_kernel.py; only the evaluation strategy differs (explicit
right-hand-side sweeps here, affine propagators there).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, sqrt

cnp.import_array()

ENGINE_NAME = "compiled"


cdef class _Kernel:
    cdef:
        int n_dg, n_bus, n_line, n_load, n_state
        int off_bus, off_line, off_load, off_obs
        double omega, c_bus
        long[::1] dg_bus, line_a, line_b, load_bus
        double[::1] R_f, L_f, C_f, R_c, L_c, n_d, v_star
        double[::1] line_R, line_L, load_R, load_L
        unsigned char[::1] conn
        double[:, ::1] L_gain, PL, Q_t
        double[:, :, ::1] P
        double sigma, epsilon
        double kp, ki, kad
        double kpV, kiV, kpQ, kiQ, clamp_v, clamp_q, v_star_sec
        int feed_live
        # held packet samples and controller memory
        double[::1] y_held, u_held, vt_held, u
        double[:, ::1] xk, integ
        double[::1] int_v, int_q
        # integration scratch
        double[::1] k1, k2, k3, k4, yt, inj

    def __init__(self, p):
        lay = p.layout
        self.n_dg = lay.n_dg
        self.n_bus = lay.n_bus
        self.n_line = lay.n_line
        self.n_load = lay.n_load
        self.n_state = lay.n_state
        self.off_bus = lay.off_bus
        self.off_line = lay.off_line
        self.off_load = lay.off_load
        self.off_obs = lay.off_obs
        self.omega = p.omega
        self.c_bus = p.c_bus
        self.dg_bus = np.ascontiguousarray(p.dg_bus, dtype=np.int64)
        self.line_a = np.ascontiguousarray(p.line_a, dtype=np.int64)
        self.line_b = np.ascontiguousarray(p.line_b, dtype=np.int64)
        self.load_bus = np.ascontiguousarray(p.load_bus, dtype=np.int64)
        self.R_f = np.ascontiguousarray(p.R_f)
        self.L_f = np.ascontiguousarray(p.L_f)
        self.C_f = np.ascontiguousarray(p.C_f)
        self.R_c = np.ascontiguousarray(p.R_c)
        self.L_c = np.ascontiguousarray(p.L_c)
        self.n_d = np.ascontiguousarray(p.n_d)
        self.v_star = np.ascontiguousarray(p.v_star)
        self.line_R = np.ascontiguousarray(p.line_R)
        self.line_L = np.ascontiguousarray(p.line_L)
        self.load_R = np.ascontiguousarray(p.load_R)
        self.load_L = np.ascontiguousarray(p.load_L)
        self.conn = np.ascontiguousarray(p.conn0, dtype=np.uint8).copy()
        self.L_gain = np.ascontiguousarray(p.L_gain)
        self.PL = np.ascontiguousarray(p.PL)
        self.Q_t = np.ascontiguousarray(p.Q_t)
        self.P = np.ascontiguousarray(p.P)
        self.sigma = p.sigma
        self.epsilon = p.epsilon
        self.kp = p.kp
        self.ki = p.ki
        self.kad = p.kad
        self.kpV = p.kpV
        self.kiV = p.kiV
        self.kpQ = p.kpQ
        self.kiQ = p.kiQ
        self.clamp_v = p.clamp_v
        self.clamp_q = p.clamp_q
        self.v_star_sec = p.v_star_sec
        self.feed_live = p.feed_live
        self.y_held = np.zeros(self.n_dg)
        self.u_held = np.zeros(2 * self.n_dg)
        self.vt_held = np.zeros(2 * self.n_dg)
        self.u = np.zeros(2 * self.n_dg)
        self.xk = np.zeros((self.n_dg, 6))
        self.integ = np.ascontiguousarray(p.integ0).copy()
        self.int_v = np.zeros(self.n_dg)
        self.int_q = np.zeros(self.n_dg)
        self.k1 = np.zeros(self.n_state)
        self.k2 = np.zeros(self.n_state)
        self.k3 = np.zeros(self.n_state)
        self.k4 = np.zeros(self.n_state)
        self.yt = np.zeros(self.n_state)
        self.inj = np.zeros(2 * self.n_bus)

    cdef void rhs(self, double[::1] y, double[::1] dy) noexcept nogil:
        cdef:
            int k, j, b, a, i0
            int ob = self.off_bus
            double om = self.omega
            double i_d, i_q, vtd, vtq, ud, uq, innov
        for b in range(2 * self.n_bus):
            self.inj[b] = 0.0
        for k in range(self.n_dg):
            i0 = 6 * k
            b = <int>self.dg_bus[k]
            dy[i0] = (-self.R_f[k] * y[i0] - y[i0 + 2] + self.u[2 * k]) / self.L_f[k] + om * y[i0 + 1]
            dy[i0 + 1] = (-self.R_f[k] * y[i0 + 1] - y[i0 + 3] + self.u[2 * k + 1]) / self.L_f[k] - om * y[i0]
            dy[i0 + 2] = (y[i0] - y[i0 + 4]) / self.C_f[k] + om * y[i0 + 3]
            dy[i0 + 3] = (y[i0 + 1] - y[i0 + 5]) / self.C_f[k] - om * y[i0 + 2]
            dy[i0 + 4] = (y[i0 + 2] - self.R_c[k] * y[i0 + 4] - y[ob + 2 * b]) / self.L_c[k] + om * y[i0 + 5]
            dy[i0 + 5] = (y[i0 + 3] - self.R_c[k] * y[i0 + 5] - y[ob + 2 * b + 1]) / self.L_c[k] - om * y[i0 + 4]
            self.inj[2 * b] += y[i0 + 4]
            self.inj[2 * b + 1] += y[i0 + 5]
        for j in range(self.n_line):
            i0 = self.off_line + 2 * j
            a = <int>self.line_a[j]
            b = <int>self.line_b[j]
            i_d = y[i0]
            i_q = y[i0 + 1]
            dy[i0] = (y[ob + 2 * a] - y[ob + 2 * b] - self.line_R[j] * i_d) / self.line_L[j] + om * i_q
            dy[i0 + 1] = (y[ob + 2 * a + 1] - y[ob + 2 * b + 1] - self.line_R[j] * i_q) / self.line_L[j] - om * i_d
            self.inj[2 * a] -= i_d
            self.inj[2 * a + 1] -= i_q
            self.inj[2 * b] += i_d
            self.inj[2 * b + 1] += i_q
        for j in range(self.n_load):
            i0 = self.off_load + 2 * j
            if not self.conn[j]:
                dy[i0] = 0.0
                dy[i0 + 1] = 0.0
                continue
            b = <int>self.load_bus[j]
            i_d = y[i0]
            i_q = y[i0 + 1]
            dy[i0] = (y[ob + 2 * b] - self.load_R[j] * i_d) / self.load_L[j] + om * i_q
            dy[i0 + 1] = (y[ob + 2 * b + 1] - self.load_R[j] * i_q) / self.load_L[j] - om * i_d
            self.inj[2 * b] -= i_d
            self.inj[2 * b + 1] -= i_q
        for b in range(self.n_bus):
            dy[ob + 2 * b] = om * y[ob + 2 * b + 1] + self.inj[2 * b] / self.c_bus
            dy[ob + 2 * b + 1] = -om * y[ob + 2 * b] + self.inj[2 * b + 1] / self.c_bus
        for k in range(self.n_dg):
            i0 = self.off_obs + 6 * k
            b = <int>self.dg_bus[k]
            if self.feed_live:
                vtd = y[ob + 2 * b]
                vtq = y[ob + 2 * b + 1]
            else:
                vtd = self.vt_held[2 * k]
                vtq = self.vt_held[2 * k + 1]
            ud = self.u_held[2 * k]
            uq = self.u_held[2 * k + 1]
            innov = self.y_held[k] - y[i0 + 2]
            dy[i0] = (-self.R_f[k] * y[i0] - y[i0 + 2] + ud) / self.L_f[k] + om * y[i0 + 1] + self.L_gain[k, 0] * innov
            dy[i0 + 1] = (-self.R_f[k] * y[i0 + 1] - y[i0 + 3] + uq) / self.L_f[k] - om * y[i0] + self.L_gain[k, 1] * innov
            dy[i0 + 2] = (y[i0] - y[i0 + 4]) / self.C_f[k] + om * y[i0 + 3] + self.L_gain[k, 2] * innov
            dy[i0 + 3] = (y[i0 + 1] - y[i0 + 5]) / self.C_f[k] - om * y[i0 + 2] + self.L_gain[k, 3] * innov
            dy[i0 + 4] = (y[i0 + 2] - self.R_c[k] * y[i0 + 4] - vtd) / self.L_c[k] + om * y[i0 + 5] + self.L_gain[k, 4] * innov
            dy[i0 + 5] = (y[i0 + 3] - self.R_c[k] * y[i0 + 5] - vtq) / self.L_c[k] - om * y[i0 + 4] + self.L_gain[k, 5] * innov

    cdef void rk4_substep(self, double[::1] y, double h) noexcept nogil:
        cdef int i
        cdef int n = self.n_state
        self.rhs(y, self.k1)
        for i in range(n):
            self.yt[i] = y[i] + 0.5 * h * self.k1[i]
        self.rhs(self.yt, self.k2)
        for i in range(n):
            self.yt[i] = y[i] + 0.5 * h * self.k2[i]
        self.rhs(self.yt, self.k3)
        for i in range(n):
            self.yt[i] = y[i] + h * self.k3[i]
        self.rhs(self.yt, self.k4)
        for i in range(n):
            y[i] = y[i] + (h / 6.0) * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i])


def run_packed(p):
    """Run a packed scenario; mirrors python_kernel.run_packed exactly."""
    from ..errors import IntegrationDivergedError
    from .packed import MONITOR_KEYS, RawRun, trace_row_count, trace_width

    cdef _Kernel kr = _Kernel(p)
    cdef:
        int n_dg = kr.n_dg
        int n_bus = kr.n_bus
        int ob = kr.off_bus
        int ol = kr.off_obs
        int n_steps = p.n_steps
        int n_sub = p.n_sub
        int decimate = p.decimate
        int enable_step = p.enable_step
        double dt = p.dt
        double h_sub = p.dt / p.n_sub
        int n_mon = n_steps + 1
        int i, j, k, s, b, sp, col, base, bad
        double e0, e1, e2, e3, e4, e5
        double quad, cross, eta_k, e_norm, fire
        double q_mean, v_mean, e_v, e_qk, q_true_k, v_ref, e_d, e_q2
        double de_i, acc

    y_arr = p.y0.copy()
    cdef double[::1] y = y_arr

    mon = {key: np.zeros((n_mon, n_dg)) for key in MONITOR_KEYS}
    cdef double[:, ::1] m_e = mon["e_norm"]
    cdef double[:, ::1] m_eta = mon["eta"]
    cdef double[:, ::1] m_trig = mon["trig"]
    cdef double[:, ::1] m_vl = mon["v_lyap"]
    cdef double[:, ::1] m_eqe = mon["eqe"]
    cdef double[:, ::1] m_dvdt = mon["dvdt"]
    cdef double[:, ::1] m_vcd = mon["vcd"]
    cdef double[:, ::1] m_q = mon["q"]
    cdef double[:, ::1] m_qh = mon["q_hat"]
    cdef double[:, ::1] m_dv = mon["delta_v"]

    trace_arr = np.zeros((trace_row_count(n_steps, decimate), trace_width(p.layout)))
    cdef double[:, ::1] trace = trace_arr

    cdef long[:, ::1] ev_buf = np.zeros((n_dg, n_mon), dtype=np.int64)
    cdef long[::1] n_events = np.zeros(n_dg, dtype=np.int64)

    cdef long[::1] sched_step = np.ascontiguousarray(p.sched_step, dtype=np.int64)
    cdef long[::1] sched_load = np.ascontiguousarray(p.sched_load, dtype=np.int64)
    cdef unsigned char[::1] sched_closed = np.ascontiguousarray(p.sched_closed, dtype=np.uint8)
    cdef int n_sched = sched_step.shape[0]

    cdef double[::1] dv = np.zeros(n_dg)
    cdef double[::1] q_h = np.zeros(n_dg)
    cdef double[::1] q_true = np.zeros(n_dg)
    cdef double[::1] f0 = np.zeros(kr.n_state)
    cdef double[::1] e_vec = np.zeros(6)

    sp = 0
    bad = -1
    for i in range(n_steps + 1):
        # switch transitions
        while sp < n_sched and sched_step[sp] == i:
            j = <int>sched_load[sp]
            if kr.conn[j] and not sched_closed[sp]:
                y[kr.off_load + 2 * j] = 0.0
                y[kr.off_load + 2 * j + 1] = 0.0
            kr.conn[j] = sched_closed[sp]
            sp += 1

        # estimated reactive power (used by secondary and monitors)
        for k in range(n_dg):
            q_h[k] = (y[ol + 6 * k + 3] * y[ol + 6 * k + 4]
                      - y[ol + 6 * k + 2] * y[ol + 6 * k + 5])

        # secondary controller
        if 0 <= enable_step <= i:
            v_mean = 0.0
            q_mean = 0.0
            for k in range(n_dg):
                v_mean += y[ol + 6 * k + 2]
                q_mean += q_h[k]
            v_mean /= n_dg
            q_mean /= n_dg
            e_v = kr.v_star_sec - v_mean
            for k in range(n_dg):
                e_qk = q_mean - q_h[k]
                kr.int_v[k] += dt * e_v
                kr.int_q[k] += dt * e_qk
                if kr.int_v[k] > kr.clamp_v:
                    kr.int_v[k] = kr.clamp_v
                elif kr.int_v[k] < -kr.clamp_v:
                    kr.int_v[k] = -kr.clamp_v
                if kr.int_q[k] > kr.clamp_q:
                    kr.int_q[k] = kr.clamp_q
                elif kr.int_q[k] < -kr.clamp_q:
                    kr.int_q[k] = -kr.clamp_q
                dv[k] = (kr.kpV * e_v + kr.kiV * kr.int_v[k]
                         + kr.kpQ * e_qk + kr.kiQ * kr.int_q[k])
        else:
            for k in range(n_dg):
                dv[k] = 0.0

        # droop + inner voltage loop
        for k in range(n_dg):
            q_true[k] = y[6 * k + 3] * y[6 * k + 4] - y[6 * k + 2] * y[6 * k + 5]
            v_ref = kr.v_star[k] - kr.n_d[k] * q_true[k] + dv[k]
            e_d = v_ref - y[6 * k + 2]
            e_q2 = -y[6 * k + 3]
            kr.integ[k, 0] += dt * e_d
            kr.integ[k, 1] += dt * e_q2
            kr.u[2 * k] = kr.kp * e_d + kr.ki * kr.integ[k, 0] - kr.kad * (y[6 * k] - y[6 * k + 4])
            kr.u[2 * k + 1] = kr.kp * e_q2 + kr.ki * kr.integ[k, 1] - kr.kad * (y[6 * k + 1] - y[6 * k + 5])
        if kr.feed_live:
            for k in range(n_dg):
                b = <int>kr.dg_bus[k]
                kr.u_held[2 * k] = kr.u[2 * k]
                kr.u_held[2 * k + 1] = kr.u[2 * k + 1]
                kr.vt_held[2 * k] = y[ob + 2 * b]
                kr.vt_held[2 * k + 1] = y[ob + 2 * b + 1]

        # event-trigger mechanism
        for k in range(n_dg):
            quad = 0.0
            cross = 0.0
            e_norm = 0.0
            for j in range(6):
                e_vec[j] = y[6 * k + j] - y[ol + 6 * k + j]
            for j in range(6):
                acc = 0.0
                for s in range(6):
                    acc += kr.Q_t[j, s] * e_vec[s]
                quad += e_vec[j] * acc
                cross += e_vec[j] * kr.PL[k, j]
                e_norm += e_vec[j] * e_vec[j]
            e_norm = sqrt(e_norm)
            eta_k = (kr.sigma - 1.0) * quad + 2.0 * cross * (y[6 * k + 2] - kr.xk[k, 2])
            fire = 0.0
            if i == 0 or (eta_k >= 0.0 and e_norm > kr.epsilon):
                fire = 1.0
                ev_buf[k, n_events[k]] = i
                n_events[k] += 1
                kr.y_held[k] = y[6 * k + 2]
                if not kr.feed_live:
                    b = <int>kr.dg_bus[k]
                    kr.u_held[2 * k] = kr.u[2 * k]
                    kr.u_held[2 * k + 1] = kr.u[2 * k + 1]
                    kr.vt_held[2 * k] = y[ob + 2 * b]
                    kr.vt_held[2 * k + 1] = y[ob + 2 * b + 1]
                for j in range(6):
                    kr.xk[k, j] = y[6 * k + j]
            acc = 0.0
            for j in range(6):
                de_i = 0.0
                for s in range(6):
                    de_i += kr.P[k, j, s] * e_vec[s]
                acc += e_vec[j] * de_i
            m_e[i, k] = e_norm
            m_eta[i, k] = eta_k
            m_trig[i, k] = fire
            m_vl[i, k] = acc
            m_eqe[i, k] = quad
            m_vcd[i, k] = y[6 * k + 2]
            m_q[i, k] = q_true[k]
            m_qh[i, k] = q_h[k]
            m_dv[i, k] = dv[k]

        # step-start derivative for the dV/dt monitor
        kr.rhs(y, f0)
        for k in range(n_dg):
            for j in range(6):
                e_vec[j] = y[6 * k + j] - y[ol + 6 * k + j]
            acc = 0.0
            for j in range(6):
                de_i = 0.0
                for s in range(6):
                    de_i += kr.P[k, j, s] * (f0[6 * k + s] - f0[ol + 6 * k + s])
                acc += e_vec[j] * de_i
            m_dvdt[i, k] = 2.0 * acc

        if i % decimate == 0:
            s = i // decimate
            trace[s, 0] = i * dt
            col = 1
            for j in range(6 * n_dg):
                trace[s, col + j] = y[j]
            col += 6 * n_dg
            for j in range(6 * n_dg):
                trace[s, col + j] = y[ol + j]
            col += 6 * n_dg
            for k in range(n_dg):
                trace[s, col + k] = m_eta[i, k]
                trace[s, col + n_dg + k] = m_trig[i, k]
                trace[s, col + 2 * n_dg + k] = dv[k]
                trace[s, col + 3 * n_dg + k] = q_true[k]
                trace[s, col + 4 * n_dg + k] = q_h[k]
            col += 5 * n_dg
            for j in range(2 * n_bus):
                trace[s, col + j] = y[ob + j]

        if i < n_steps:
            for s in range(n_sub):
                kr.rk4_substep(y, h_sub)
            bad = -1
            for j in range(kr.n_state):
                if not isfinite(y[j]):
                    bad = j
                    break
            if bad >= 0:
                raise IntegrationDivergedError(
                    f"integration diverged at t={(i + 1) * dt:.6f} s "
                    f"(flat state component {bad})",
                    t=(i + 1) * dt, component=bad)

    event_steps = [np.asarray(ev_buf[k, :n_events[k]]).copy() for k in range(n_dg)]
    return RawRun(
        event_steps=event_steps,
        monitors=mon,
        trace=trace_arr,
        y_final=y_arr,
        integ_final=np.asarray(kr.integ).copy(),
        xk_final=np.asarray(kr.xk).copy(),
        engine=ENGINE_NAME,
    )

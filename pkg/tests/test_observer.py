"""Observer replicas: event holds, innovation, determinism, decay rate."""

import numpy as np
import pytest

from etgrid.errors import PacketOrderError
from etgrid.model import VCD
from etgrid.observer import (EventPacket, ObserverReplica, apply_event,
                             estimation_error, observer_derivative)
from etgrid.plant import rk4_step


def make_replica(**kw):
    return ObserverReplica(**kw)


def packet(t, y, u=(0.0, 0.0), vt=(0.0, 0.0), sender=1):
    return EventPacket(sender_id=sender, t_k=t, y=y, u=u, v_t=vt)


def test_apply_event_replaces_holds_only():
    r = make_replica(x_hat=np.arange(6.0))
    apply_event(r, packet(0.5, 5.0, u=(1.0, 2.0), vt=(3.0, 4.0)))
    assert r.y_held == 5.0
    assert np.array_equal(r.u_held, [1.0, 2.0])
    assert np.array_equal(r.vt_held, [3.0, 4.0])
    assert np.array_equal(r.x_hat, np.arange(6.0))   # estimate continuous
    assert r.last_event_time == 0.5


def test_apply_event_idempotent_payload():
    r = make_replica()
    apply_event(r, packet(0.1, 2.0))
    before = (r.y_held, r.u_held.copy(), r.vt_held.copy())
    apply_event(r, packet(0.2, 2.0))
    assert r.y_held == before[0]
    assert np.array_equal(r.u_held, before[1])
    assert np.array_equal(r.vt_held, before[2])
    assert r.last_event_time == 0.2


def test_stale_packet_rejected():
    r = make_replica()
    apply_event(r, packet(1.0, 0.0))
    with pytest.raises(PacketOrderError):
        apply_event(r, packet(0.5, 0.0))


def test_zero_innovation_gives_open_loop_rate(table1_ss, table1_design):
    r = make_replica(x_hat=np.array([1.0, -2.0, 3.0, 0.5, 0.1, -0.7]))
    r.y_held = r.x_hat[VCD]
    rate = observer_derivative(r, table1_ss, table1_design.L)
    assert np.allclose(rate, table1_ss.A @ r.x_hat)


def test_scalar_analogue_hand_value():
    """a = -1, b = 0, l = 1, x_hat = 0, y_held = 2  ->  dx_hat/dt = 2."""
    from etgrid.model import StateSpace
    ss6 = StateSpace(A=-np.eye(6), B=np.zeros((6, 2)), d=np.zeros((6, 2)),
                     C=np.eye(6)[VCD:VCD + 1])
    r = make_replica()
    r.y_held = 2.0
    rate = observer_derivative(r, ss6, np.eye(6)[:, VCD:VCD + 1])
    assert rate[VCD] == pytest.approx(2.0)


def test_derivative_matches_term_by_term(table1_ss, table1_design):
    rng = np.random.default_rng(2)
    r = make_replica(x_hat=rng.normal(size=6) * 50)
    r.y_held = 4.2
    r.u_held = rng.normal(size=2) * 100
    r.vt_held = rng.normal(size=2) * 100
    L = table1_design.L.reshape(-1)
    expected = (table1_ss.A @ r.x_hat + table1_ss.B @ r.u_held
                + table1_ss.d @ r.vt_held
                + L * (r.y_held - r.x_hat[VCD]))
    got = observer_derivative(r, table1_ss, table1_design.L)
    assert np.allclose(got, expected, rtol=1e-13)
    assert np.all(np.isfinite(got))


def test_estimation_error_examples():
    assert np.array_equal(estimation_error(np.zeros(6), np.zeros(6)), np.zeros(6))
    e = estimation_error([1, 0, 0, 0, 0, 0], np.zeros(6))
    assert np.array_equal(e, [1, 0, 0, 0, 0, 0])
    rng = np.random.default_rng(3)
    x, xh = rng.normal(size=6), rng.normal(size=6)
    assert np.array_equal(estimation_error(x, xh), x - xh)


def test_innovation_depends_only_on_transmitted_scalar(table1_ss, table1_design):
    """A y-only packet (u, v_t re-sent unchanged) changes nothing."""
    rng = np.random.default_rng(4)
    r1 = make_replica(x_hat=rng.normal(size=6))
    r2 = make_replica(x_hat=r1.x_hat.copy())
    apply_event(r1, packet(0.0, 1.5, u=(7.0, 8.0), vt=(9.0, 10.0)))
    apply_event(r2, packet(0.0, 1.5, u=(7.0, 8.0), vt=(9.0, 10.0)))
    # second event: r1 gets a fresh y only; r2 gets the full payload again
    apply_event(r1, packet(0.1, 2.5, u=(7.0, 8.0), vt=(9.0, 10.0)))
    apply_event(r2, packet(0.1, 2.5, u=(7.0, 8.0), vt=(9.0, 10.0)))
    d1 = observer_derivative(r1, table1_ss, table1_design.L)
    d2 = observer_derivative(r2, table1_ss, table1_design.L)
    assert np.array_equal(d1, d2)


def test_replica_determinism_bit_exact(table1_ss, table1_design):
    """Two identically driven replicas agree exactly at every step."""
    rng = np.random.default_rng(5)
    replicas = [make_replica(x_hat=np.full(6, 1.0)) for _ in range(2)]
    L = table1_design.L
    h = 1e-5
    for step in range(2000):
        if step % 137 == 0:
            pkt = packet(step * h, float(rng.normal()), u=(1.0, -1.0), vt=(2.0, 0.5))
            for r in replicas:
                apply_event(r, pkt)
        for r in replicas:
            r.x_hat = rk4_step(lambda x: (
                table1_ss.A @ x + table1_ss.B @ r.u_held
                + table1_ss.d @ r.vt_held
                + L.reshape(-1) * (r.y_held - x[VCD])), r.x_hat, h)
        assert np.array_equal(replicas[0].x_hat, replicas[1].x_hat)


def test_continuous_feedback_error_decay(table1_ss, table1_design):
    """Always-trigger events on the autonomous plant: log||e|| decays no
    slower than 90% of the dominant closed-loop rate."""
    rng = np.random.default_rng(6)
    L = table1_design.L.reshape(-1)
    A, B = table1_ss.A, table1_ss.B
    u = np.array([10.0, -5.0])
    # plant at rest so the held measurement is exact between refreshes and
    # the error contracts at the design rate
    x = -np.linalg.solve(A, B @ u)
    x_hat = x + rng.normal(size=6) * 20
    h = 1e-5
    n = 50000                    # 0.5 s
    norms = []
    for step in range(n + 1):
        if step % 50 == 0:
            norms.append(np.linalg.norm(x - x_hat))
        y_held = x[VCD]          # event at every step
        z = np.concatenate([x, x_hat])

        def rate(z):
            xx, xh = z[:6], z[6:]
            return np.concatenate([
                A @ xx + B @ u,
                A @ xh + B @ u + L * (y_held - xh[VCD])])

        z = rk4_step(rate, z, h)
        x, x_hat = z[:6], z[6:]
    norms = np.array(norms)
    t = np.arange(norms.size) * 50 * h
    half = norms.size // 2
    slope = np.polyfit(t[half:], np.log(norms[half:]), 1)[0]
    lam = np.max(np.linalg.eigvals(A - table1_design.L @ table1_ss.C).real)
    assert norms[-1] < norms[0] * 1e-2
    assert slope <= 0.9 * lam    # lam < 0: at least 90% of the dominant rate

"""Averaging secondary controller: PI arithmetic, fixed point, sharing sums."""

import numpy as np
import pytest

from etgrid.model import reactive_power
from etgrid.secondary import (SecondaryGains, SecondaryState, q_hat,
                              secondary_step)


def enabled_state(n=3):
    s = SecondaryState.zeros(n, enable_time=0.0)
    s.enabled = True
    return s


def test_zero_error_fixed_point():
    gains = SecondaryGains()
    state = enabled_state()
    est = [(311.0, 500.0)] * 3
    dv, state = secondary_step(est, 311.0, gains, state, 1e-5)
    assert np.array_equal(dv, np.zeros(3))
    assert np.array_equal(state.int_v, np.zeros(3))
    assert np.array_equal(state.int_q, np.zeros(3))


def test_voltage_pi_hand_value():
    """v_hat = 310 everywhere: dv = 1*(311-310) + 5*(1e-5*1) = 1.00005."""
    gains = SecondaryGains(k_pV=1.0, k_iV=5.0, k_pQ=0.003, k_iQ=0.4)
    state = enabled_state()
    dv, _ = secondary_step([(310.0, 0.0)] * 3, 311.0, gains, state, 1e-5)
    assert np.allclose(dv, 1.00005)


def test_reactive_sharing_sign_pattern():
    """Over-producing DG gets pushed down: dv signs (-, 0, +)."""
    gains = SecondaryGains()
    state = enabled_state()
    h = 1e-5
    dv, _ = secondary_step([(311.0, 100.0), (311.0, 0.0), (311.0, -100.0)],
                           311.0, gains, state, h)
    e_q = np.array([-100.0, 0.0, 100.0])
    expected = gains.k_pQ * e_q + gains.k_iQ * (h * e_q)
    assert np.allclose(dv, expected)
    assert np.allclose(dv, [-0.3, 0.0, 0.3], atol=1e-3)
    assert dv[0] < 0 < dv[2] and dv[1] == 0.0


def test_proportional_reactive_corrections_sum_to_zero():
    rng = np.random.default_rng(14)
    gains = SecondaryGains(k_pV=0.0, k_iV=0.0, k_pQ=0.003, k_iQ=0.0)
    for _ in range(50):
        state = enabled_state()
        est = [(311.0, float(q)) for q in rng.normal(scale=3e3, size=3)]
        dv, _ = secondary_step(est, 311.0, gains, state, 1e-5)
        assert sum(dv) == pytest.approx(0.0, abs=1e-12)


def test_disabled_controller_is_inert():
    gains = SecondaryGains()
    state = SecondaryState.zeros(3, enable_time=1.0)   # not enabled yet
    dv, state = secondary_step([(300.0, 100.0)] * 3, 311.0, gains, state, 1e-5)
    assert np.array_equal(dv, np.zeros(3))
    assert np.array_equal(state.int_v, np.zeros(3))
    assert np.array_equal(state.int_q, np.zeros(3))


def test_integrator_clamp():
    gains = SecondaryGains(k_iV=5.0)
    state = enabled_state()
    bound = 10.0 * 311.0 / 5.0
    for _ in range(2000):
        secondary_step([(0.0, 0.0)] * 3, 311.0, gains, state, 1.0)
    assert np.all(state.int_v <= bound + 1e-12)


def test_empty_estimates_rejected():
    with pytest.raises(ValueError):
        secondary_step([], 311.0, SecondaryGains(), enabled_state(0), 1e-5)
    with pytest.raises(ValueError):
        secondary_step([(311.0, 0.0)], 311.0, SecondaryGains(),
                       enabled_state(3), -1e-5)


def test_negative_gains_rejected():
    with pytest.raises(ValueError):
        SecondaryGains(k_pV=-1.0)


def test_q_hat_examples():
    assert q_hat(np.zeros(6)) == 0.0
    x = np.zeros(6)
    x[2] = 311.0    # v_cd
    x[5] = -10.0    # i_cq
    assert q_hat(x) == pytest.approx(3110.0)
    rng = np.random.default_rng(15)
    for _ in range(20):
        x = rng.normal(size=6)
        assert q_hat(x) == reactive_power(x[2], x[3], x[4], x[5])

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attitude_rta.controllers import (FLIP_Y_Q, IDENTITY_Q, PdConfig, PdController, ZeroController,
                                      error_quaternion, pd_control, zero_control)
from attitude_rta.dynamics import step
from attitude_rta.quaternion import from_axis_angle, multiply, inverse

unit_q = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.array(v) / np.linalg.norm(v))


def _state(q=(0, 0, 0, 1), w=(0, 0, 0)):
    return np.array([*q, *w, 0, 0, 0, 275.0, 5000.0, 0.0], dtype=float)


def test_error_quaternion_trivial():
    q = from_axis_angle([1, 2, 3] / np.linalg.norm([1, 2, 3]), 0.7)
    np.testing.assert_allclose(error_quaternion(q, q), 0.0, atol=1e-15)
    np.testing.assert_allclose(error_quaternion(q, IDENTITY_Q), q[:3], atol=1e-15)


@given(unit_q, unit_q)
def test_error_quaternion_unit_norm(q, qc):
    full = multiply(q, inverse(qc))
    assert np.linalg.norm(full) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(error_quaternion(q, qc), full[:3])


def test_error_quaternion_small_rotation_sign():
    # q = qc rotated by +a about z: error vector part ~ +/- a/2 along z, nothing else
    qc = from_axis_angle([1, 0, 0], 0.4)
    q = multiply(from_axis_angle([0, 0, 1], 0.01), qc)
    dq = error_quaternion(q, qc)
    assert abs(abs(dq[2]) - math.sin(0.005)) < 1e-12
    assert np.allclose(dq[:2], 0.0, atol=1e-12)


def test_pd_at_target_is_zero(p):
    cfg = PdConfig()
    np.testing.assert_array_equal(pd_control(_state(), cfg, 0.0, p), np.zeros(3))


@settings(max_examples=200)
@given(unit_q, st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.floats(0, 3000))
def test_pd_strictly_bounded(q, w, t):
    from attitude_rta.params import SpacecraftParams
    p = SpacecraftParams()
    u = pd_control(_state(q, w), PdConfig(), t, p)
    assert np.all(np.abs(u) <= p.psidot_max)
    assert np.all(np.abs(u) < 181.3 + 1e-9)


def test_schedule_switch():
    cfg = PdConfig()
    np.testing.assert_array_equal(cfg.command(999.0), IDENTITY_Q)
    np.testing.assert_array_equal(cfg.command(1000.0), FLIP_Y_Q)
    np.testing.assert_array_equal(cfg.command(1999.0), FLIP_Y_Q)


@pytest.mark.parametrize("sched, msg", [
    ((), "empty"),
    (((0.0, IDENTITY_Q), (0.0, FLIP_Y_Q)), "increasing"),
    (((0.0, (0, 0, 0, 2)),), "unit"),
])
def test_pd_config_validation(sched, msg):
    with pytest.raises(ValueError, match=msg):
        PdConfig(schedule=sched)


def test_zero_controller(p):
    np.testing.assert_array_equal(zero_control(), np.zeros(3))
    np.testing.assert_array_equal(ZeroController()(_state(), 3.0), np.zeros(3))
    assert PdController(PdConfig(), p)(_state(), 0.0).shape == (3,)


def test_pd_tracking_settles(p):
    """Unfiltered PD from 10 deg off target settles below 0.5 deg within 500 s."""
    cfg = PdConfig(schedule=((0.0, IDENTITY_Q),))
    x = _state(q=from_axis_angle([0, 1, 0], math.radians(10.0)))
    errs = []
    for k in range(500):
        u = pd_control(x, cfg, float(k), p)
        x = step(x, u, 1.0, p)
        errs.append(2.0 * math.asin(min(1.0, np.linalg.norm(error_quaternion(x[:4], IDENTITY_Q)))))
    assert math.degrees(errs[-1]) < 0.5
    tail = np.array(errs[len(errs) // 2:])
    assert np.all(np.diff(tail) <= 1e-9)

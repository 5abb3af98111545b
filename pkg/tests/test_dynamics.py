import math

import numpy as np
import pytest
from scipy.optimize import brentq

from attitude_rta import dynamics as dyn
from attitude_rta.params import c_to_k
from attitude_rta.quaternion import from_axis_angle, random_unit


def _state(q=(0, 0, 0, 1), w=(0, 0, 0), psi=(0, 0, 0), T=280.0, E=5000.0, th=0.3):
    return np.array([*q, *w, *psi, T, E, th], dtype=float)


def _random_state(rng):
    return _state(random_unit(rng), rng.uniform(-0.02, 0.02, 3), rng.uniform(-500, 500, 3),
                  rng.uniform(250, 300), rng.uniform(0, 1e4), rng.uniform(0, 2 * math.pi))


def test_rest_is_equilibrium(p):
    qdot, wdot, psidot = dyn.attitude_derivative(_state(), np.zeros(3), p)
    assert not qdot.any() and not wdot.any() and not psidot.any()


def test_spin_about_z(p):
    qdot, _, _ = dyn.attitude_derivative(_state(w=(0, 0, 0.3)), np.zeros(3), p)
    np.testing.assert_allclose(qdot, [0, 0, 0.15, 0])


def test_euler_equations_cross_product_oracle(p):
    w = np.array([0.01, 0.01, 0.01])
    jmat = np.diag(p.J)
    expected = -np.linalg.solve(jmat, np.cross(w, jmat @ w))
    np.testing.assert_allclose(dyn.omega_dot(w, np.zeros(3), p), expected, rtol=1e-14)


def test_solar_flux_full_sun(p):
    # face normal -j_B; rotate so it points along +x (the sun at theta=0)
    q = from_axis_angle([0, 0, 1], math.pi / 2)
    fl = dyn.thermal_fluxes(_state(q=q), [1, 0, 0], p)
    assert fl.solar == pytest.approx(0.13 * 0.03 * 1367, rel=1e-12)
    assert fl.solar == pytest.approx(5.3313, abs=1e-4)


def test_solar_flux_shadow(p):
    q = from_axis_angle([0, 0, 1], -math.pi / 2)
    assert dyn.thermal_fluxes(_state(q=q), [1, 0, 0], p).solar == 0.0


def test_rejected_flux(p):
    fl = dyn.thermal_fluxes(_state(T=255.0), [1, 0, 0], p)
    assert fl.rejected == pytest.approx(0.4316, abs=1e-4)


def test_temperature_derivative(p):
    assert dyn.temperature_derivative(0.0, p) == 0.0
    assert dyn.temperature_derivative(1.8, p) == pytest.approx(1.0e-3)


def test_thermal_equilibrium_bisection(p):
    x = _state(q=from_axis_angle([0, 0, 1], -math.pi / 4))
    sun = [1, 0, 0]

    def total(T):
        y = x.copy()
        y[dyn.T_IDX] = T
        return dyn.thermal_fluxes(y, sun, p).total

    t_eq = brentq(total, 50.0, 1000.0, xtol=1e-12)
    x[dyn.T_IDX] = t_eq
    assert dyn.temperature_derivative(dyn.thermal_fluxes(x, sun, p).total, p) == pytest.approx(0.0, abs=1e-12)


def test_energy_full_sun(p):
    assert dyn.panel_power(1.0, p) == pytest.approx(22.714, abs=1e-3)
    # panel +k_B pointed at the sun (+x Hill): +90 deg about y takes k_B to x
    q = from_axis_angle([0, 1, 0], math.pi / 2)
    assert dyn.energy_derivative(_state(q=q), [1, 0, 0], p) == pytest.approx(7.714, abs=1e-3)


def test_energy_dark_and_linearity(p):
    assert dyn.panel_power(-0.2, p) - p.power_out == -15.0
    assert dyn.panel_power(0.5, p) == pytest.approx(0.5 * dyn.panel_power(1.0, p), rel=1e-15)


def test_affine_split_zero_control(p, rng):
    x = _random_state(rng)
    f, g = dyn.full_f_g(x, p)
    np.testing.assert_array_equal(f + g @ np.zeros(3), dyn.derivative(x, np.zeros(3), p))


def test_affine_split_random(p, rng):
    for _ in range(200):
        x, u = _random_state(rng), rng.uniform(-180, 180, 3)
        f, g = dyn.full_f_g(x, p)
        direct = dyn.derivative(x, u, p)
        assert np.max(np.abs(direct - (f + g @ u))) <= 1e-12
        qdot, wdot, psidot = dyn.attitude_derivative(x, u, p)
        np.testing.assert_allclose(direct[:10], np.concatenate([qdot, wdot, psidot]), atol=1e-15)
        sun = dyn.sun_vector(x[dyn.TH_IDX])
        assert direct[dyn.T_IDX] == pytest.approx(
            dyn.temperature_derivative(dyn.thermal_fluxes(x, sun, p).total, p), abs=1e-15)
        assert direct[dyn.E_IDX] == pytest.approx(dyn.energy_derivative(x, sun, p), abs=1e-12)
        assert f[dyn.TH_IDX] == -0.001027


def test_drift_jacobian_finite_difference(p, rng):
    for _ in range(20):
        x = _random_state(rng)
        _, jac = dyn.drift_jacobian(x, p)
        fd = np.zeros_like(jac)
        for i in range(dyn.N_STATE):
            h = 1e-6 * max(1.0, abs(x[i]))
            e = np.zeros(dyn.N_STATE)
            e[i] = h
            fd[:, i] = (dyn.derivative(x + e, np.zeros(3), p) - dyn.derivative(x - e, np.zeros(3), p)) / (2 * h)
        np.testing.assert_allclose(jac, fd, rtol=1e-5, atol=1e-9)


def test_step_at_rest(p):
    x = _state(T=c_to_k(5.0))
    y = dyn.step(x, np.zeros(3), 1.0, p)
    np.testing.assert_array_equal(y[:10], x[:10])
    assert y[dyn.TH_IDX] == pytest.approx(x[dyn.TH_IDX] - 0.001027)
    assert y[dyn.T_IDX] != x[dyn.T_IDX]


def test_step_full_sun_energy(p):
    q = from_axis_angle([0, 1, 0], math.pi / 2)
    x = _state(q=q, th=0.0)
    y = dyn.step(x, np.zeros(3), 1.0, p)
    gain = y[dyn.E_IDX] - x[dyn.E_IDX]
    assert gain == pytest.approx(7.714, abs=1e-3)
    assert abs(gain - dyn.derivative(x, np.zeros(3), p)[dyn.E_IDX]) < 1e-3


def test_step_keeps_unit_quaternion(p, rng):
    x = _random_state(rng)
    for _ in range(200):
        x = dyn.step(x, rng.uniform(-18, 18, 3), 1.0, p)
        assert abs(np.linalg.norm(x[:4]) - 1.0) <= 1e-9
        assert 0.0 <= x[dyn.TH_IDX] < 2 * math.pi


def test_step_full_state_roundtrip(p):
    s = dyn.FullState.from_vector(_state())
    out = dyn.step(s, np.zeros(3), 1.0, p)
    assert isinstance(out, dyn.FullState)


def test_step_rejects_blowup(p):
    x = _state()
    with pytest.raises(dyn.IntegrationError, match="non-finite"):
        dyn.step(x, [np.inf, 0, 0], 1.0, p)


def test_battery_floor(p):
    x = _state(E=1.0, q=from_axis_angle([0, 1, 0], -math.pi / 2), th=0.0)
    assert dyn.step(x, np.zeros(3), 1.0, p)[dyn.E_IDX] == 0.0


def test_wrap_angle():
    assert dyn.wrap_angle(-1e-20) in (0.0, pytest.approx(2 * math.pi))
    assert dyn.wrap_angle(2 * math.pi + 0.5) == pytest.approx(0.5)
    assert 0.0 <= dyn.wrap_angle(-1e-18) < 2 * math.pi

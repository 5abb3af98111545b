"""Control-affine attitude, thermal and energy dynamics.

State vector layout (13 scalars)::

    [q1 q2 q3 q4 | w1 w2 w3 | psi1 psi2 psi3 | T | E | theta_s]

``q`` is scalar-last (Hill -> body), ``w`` body rates in rad/s, ``psi``
wheel speeds in rad/s, ``T`` the -j_B face temperature in K, ``E`` the
battery energy in J and ``theta_s`` the sun angle in the Hill x-y plane.
The control is the wheel acceleration ``u = psidot`` (rad/s^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .params import SpacecraftParams
from .quaternion import cosine_form, dcm, omega_matrix, xi_matrix

N_STATE = 13
N_CONTROL = 3

Q = slice(0, 4)
W = slice(4, 7)
PSI = slice(7, 10)
T_IDX = 10
E_IDX = 11
TH_IDX = 12

STATE_NAMES = (
    "q1", "q2", "q3", "q4", "w1", "w2", "w3",
    "psi1", "psi2", "psi3", "T", "E", "theta_s",
)

TWO_PI = 2.0 * math.pi

# body-fixed directions
SENSOR_AXIS = np.array([1.0, 0.0, 0.0])
ANTENNA_AXIS = np.array([0.0, 1.0, 0.0])
THERMAL_FACE = np.array([0.0, -1.0, 0.0])
PANEL_AXIS = np.array([0.0, 0.0, 1.0])

EARTH_DIR = np.array([-1.0, 0.0, 0.0])


class IntegrationError(RuntimeError):
    pass


@dataclass
class FullState:
    q: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    T: float
    E: float
    theta_s: float

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float).reshape(4)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.psi = np.asarray(self.psi, dtype=float).reshape(3)
        self.T = float(self.T)
        self.E = float(self.E)
        self.theta_s = float(self.theta_s)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FullState):
            return NotImplemented
        return bool(np.array_equal(self.as_vector(), other.as_vector()))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.omega, self.psi, [self.T, self.E, self.theta_s]])

    @classmethod
    def from_vector(cls, x) -> "FullState":
        x = np.asarray(x, dtype=float)
        return cls(x[Q], x[W], x[PSI], x[T_IDX], x[E_IDX], x[TH_IDX])

    def validate(self) -> None:
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("state has non-finite entries")
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-6:
            raise ValueError("quaternion is not unit norm")
        if self.E < 0.0 or self.T <= 0.0:
            raise ValueError("state requires E >= 0 and T > 0 K")


def as_vector(state) -> np.ndarray:
    if isinstance(state, FullState):
        return state.as_vector()
    x = np.asarray(state, dtype=float)
    if x.shape != (N_STATE,):
        raise ValueError(f"expected a {N_STATE}-vector state, got shape {x.shape}")
    return x


def sun_vector(theta_s: float) -> np.ndarray:
    return np.array([math.cos(theta_s), math.sin(theta_s), 0.0])


def wrap_angle(theta: float) -> float:
    out = math.fmod(theta, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    if out >= TWO_PI:  # fmod of tiny negatives can round up
        out = 0.0
    return out


def omega_dot(omega, u, p: SpacecraftParams) -> np.ndarray:
    """Rigid-body Euler equations, J w' + w x J w = wheel_sign * D * u."""
    j1, j2, j3 = p.J
    w1, w2, w3 = omega
    k = p.wheel_sign * p.D
    return np.array(
        [
            ((j2 - j3) * w2 * w3 + k * u[0]) / j1,
            ((j3 - j1) * w3 * w1 + k * u[1]) / j2,
            ((j1 - j2) * w1 * w2 + k * u[2]) / j3,
        ]
    )


def attitude_derivative(state, u, p: SpacecraftParams):
    """Return ``(qdot, omegadot, psidot)``."""
    x = as_vector(state)
    u = np.asarray(u, dtype=float)
    qdot = 0.5 * xi_matrix(x[Q]) @ x[W]
    return qdot, omega_dot(x[W], u, p), u.copy()


class ThermalFluxes(NamedTuple):
    solar: float
    albedo: float
    ir: float
    rejected: float
    total: float


def thermal_fluxes(state, sun_hat, p: SpacecraftParams) -> ThermalFluxes:
    x = as_vector(state)
    normal = dcm(x[Q]).T @ THERMAL_FACE
    cos_sun = float(normal @ np.asarray(sun_hat, dtype=float))
    cos_earth = float(normal @ EARTH_DIR)
    return _fluxes(cos_sun, cos_earth, x[T_IDX], p)


def _fluxes(cos_sun: float, cos_earth: float, temp: float, p: SpacecraftParams) -> ThermalFluxes:
    aas = p.absorptivity * p.area_node * p.solar_constant
    sea = p.stefan_boltzmann * p.emissivity * p.area_node
    view = p.view_factor * max(0.0, cos_earth)
    solar = aas * max(0.0, cos_sun)
    albedo = aas * p.albedo_factor * view
    ir = sea * view * p.earth_temp**4
    rejected = sea * temp**4
    return ThermalFluxes(solar, albedo, ir, rejected, solar + albedo + ir - rejected)


def temperature_derivative(q_total: float, p: SpacecraftParams) -> float:
    return q_total / (p.mass_node * p.cp)


def panel_power(cos_sun: float, p: SpacecraftParams) -> float:
    return p.ideal_perf * p.degradation * p.panel_area * max(0.0, cos_sun)


def energy_derivative(state, sun_hat, p: SpacecraftParams) -> float:
    x = as_vector(state)
    panel = dcm(x[Q]).T @ PANEL_AXIS
    return panel_power(float(panel @ np.asarray(sun_hat, dtype=float)), p) - p.power_out


def derivative(state, u, p: SpacecraftParams) -> np.ndarray:
    """Full state derivative assembled directly from the subsystem models."""
    x = as_vector(state)
    u = np.asarray(u, dtype=float)
    a = dcm(x[Q])
    sun = sun_vector(x[TH_IDX])
    # rows of the Hill->body matrix are the body axes seen from Hill
    face = -a[1]
    fl = _fluxes(float(face @ sun), float(face @ EARTH_DIR), x[T_IDX], p)
    out = np.empty(N_STATE)
    out[Q] = 0.5 * xi_matrix(x[Q]) @ x[W]
    out[W] = omega_dot(x[W], u, p)
    out[PSI] = u
    out[T_IDX] = temperature_derivative(fl.total, p)
    out[E_IDX] = panel_power(float(a[2] @ sun), p) - p.power_out
    out[TH_IDX] = -p.mean_motion
    return out


def control_matrix(p: SpacecraftParams) -> np.ndarray:
    g = np.zeros((N_STATE, N_CONTROL))
    k = p.wheel_sign * p.D
    for i in range(3):
        g[4 + i, i] = k / p.J[i]
        g[7 + i, i] = 1.0
    return g


def full_f_g(state, p: SpacecraftParams) -> tuple[np.ndarray, np.ndarray]:
    """Control-affine split ``xdot = f(x) + g(x) u``."""
    x = as_vector(state)
    return derivative(x, np.zeros(N_CONTROL), p), control_matrix(p)


# -- differentiable pieces ---------------------------------------------------

_FORMS = {}


def _basis_forms(body_axis: np.ndarray) -> np.ndarray:
    key = tuple(body_axis)
    forms = _FORMS.get(key)
    if forms is None:
        forms = np.stack([cosine_form(body_axis, e) for e in np.eye(3)])
        _FORMS[key] = forms
    return forms


def cosine_jet(x: np.ndarray, body_axis: np.ndarray, target: str, order: int = 2) -> ad.Jet:
    """Cosine between a body axis and the sun or Earth direction, as a jet.

    The cosine is a quadratic form in ``q`` (and trigonometric in
    ``theta_s`` for the sun), so its derivatives are exact primitives.
    """
    forms = _basis_forms(body_axis)
    q = x[Q]
    grad = np.zeros(N_STATE)
    hess = np.zeros((N_STATE, N_STATE)) if order == 2 else None
    if target == "earth":
        m0 = np.tensordot(EARTH_DIR, forms, axes=1)
        mq = m0 @ q
        val = float(q @ mq)
        grad[Q] = 2.0 * mq
        if hess is not None:
            hess[Q, Q] = 2.0 * m0
        return ad.Jet(val, grad, hess)
    if target != "sun":
        raise ValueError(f"unknown target {target!r}")
    th = x[TH_IDX]
    c, s = math.cos(th), math.sin(th)
    m0 = c * forms[0] + s * forms[1]
    m1 = -s * forms[0] + c * forms[1]
    mq = m0 @ q
    m1q = m1 @ q
    val = float(q @ mq)
    grad[Q] = 2.0 * mq
    grad[TH_IDX] = float(q @ m1q)
    if hess is not None:
        hess[Q, Q] = 2.0 * m0
        hess[Q, TH_IDX] = 2.0 * m1q
        hess[TH_IDX, Q] = 2.0 * m1q
        hess[TH_IDX, TH_IDX] = -val
    return ad.Jet(val, grad, hess)


def thermal_rate_jet(x: np.ndarray, p: SpacecraftParams, order: int = 1,
                     cos_sun: ad.Jet | None = None, cos_earth: ad.Jet | None = None) -> ad.Jet:
    cos_sun = cos_sun if cos_sun is not None else cosine_jet(x, THERMAL_FACE, "sun", order)
    cos_earth = cos_earth if cos_earth is not None else cosine_jet(x, THERMAL_FACE, "earth", order)
    temp = ad.Jet.variable(x[T_IDX], T_IDX, N_STATE, order)
    aas = p.absorptivity * p.area_node * p.solar_constant
    sea = p.stefan_boltzmann * p.emissivity * p.area_node
    view = ad.relu(cos_earth) * p.view_factor
    q_total = (ad.relu(cos_sun) * aas + view * (aas * p.albedo_factor + sea * p.earth_temp**4)
               - (temp**4) * sea)
    return q_total * (1.0 / (p.mass_node * p.cp))


def energy_rate_jet(x: np.ndarray, p: SpacecraftParams, order: int = 1,
                    cos_panel: ad.Jet | None = None) -> ad.Jet:
    cos_panel = cos_panel if cos_panel is not None else cosine_jet(x, PANEL_AXIS, "sun", order)
    return ad.relu(cos_panel) * (p.ideal_perf * p.degradation * p.panel_area) - p.power_out


def drift_jacobian(state, p: SpacecraftParams) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(f(x), df/dx)``."""
    x = as_vector(state)
    f = derivative(x, np.zeros(N_CONTROL), p)
    jac = np.zeros((N_STATE, N_STATE))
    jac[Q, Q] = 0.5 * omega_matrix(x[W])
    jac[Q, W] = 0.5 * xi_matrix(x[Q])
    j1, j2, j3 = p.J
    w1, w2, w3 = x[W]
    jac[W, W] = np.array(
        [
            [0.0, (j2 - j3) * w3 / j1, (j2 - j3) * w2 / j1],
            [(j3 - j1) * w3 / j2, 0.0, (j3 - j1) * w1 / j2],
            [(j1 - j2) * w2 / j3, (j1 - j2) * w1 / j3, 0.0],
        ]
    )
    jac[T_IDX] = thermal_rate_jet(x, p).grad
    jac[E_IDX] = energy_rate_jet(x, p).grad
    return f, jac


# -- integration ---------------------------------------------------------------

def step(state, u, dt: float, p: SpacecraftParams, substeps: int = 1):
    """Advance one zero-order-hold interval with classical RK4.

    The quaternion is renormalized, the sun angle wrapped and the battery
    floored at zero at the end of the interval. Returns the same type as
    ``state``.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    x = as_vector(state).copy()
    u = np.asarray(u, dtype=float)
    h = dt / substeps
    with np.errstate(over="ignore", invalid="ignore"):  # reported below
        for _ in range(substeps):
            k1 = derivative(x, u, p)
            k2 = derivative(x + 0.5 * h * k1, u, p)
            k3 = derivative(x + 0.5 * h * k2, u, p)
            k4 = derivative(x + h * k3, u, p)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise IntegrationError(f"non-finite {STATE_NAMES[bad[0]]} after step")
    x[Q] = x[Q] / np.linalg.norm(x[Q])
    x[TH_IDX] = wrap_angle(x[TH_IDX])
    x[E_IDX] = max(x[E_IDX], 0.0)  # an empty battery stays empty
    if isinstance(state, FullState):
        return FullState.from_vector(x)
    return x

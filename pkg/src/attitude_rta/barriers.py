"""Safety constraints, their derivatives and barrier rows.

Each constraint is a scalar function of the state whose non-negative
superlevel set is safe. Angle-based constraints and the energy/temperature
surrogates are relative degree 2 and are lifted once before they become a
linear-in-control row ``a @ u + b >= 0``. The rate limits on ``w`` and
``psi`` are relative degree 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dynamics import (
    ANTENNA_AXIS,
    E_IDX,
    N_STATE,
    PANEL_AXIS,
    PSI,
    SENSOR_AXIS,
    T_IDX,
    THERMAL_FACE,
    W,
    as_vector,
    control_matrix,
    cosine_jet,
    drift_jacobian,
)
from .params import SpacecraftParams

HALF_PI = 0.5 * math.pi

EXCLUSION = "exclusion"
COMMUNICATION = "communication"
TEMPERATURE = "temperature"
BATTERY = "battery"
OMEGA_IDS = ("omega1", "omega2", "omega3")
PSI_IDS = ("psi1", "psi2", "psi3")
CONSTRAINT_IDS = (EXCLUSION, COMMUNICATION, TEMPERATURE, BATTERY) + OMEGA_IDS + PSI_IDS

RELATIVE_DEGREE = {EXCLUSION: 2, COMMUNICATION: 2, TEMPERATURE: 2, BATTERY: 2}
for _cid in OMEGA_IDS + PSI_IDS:
    RELATIVE_DEGREE[_cid] = 1

DEGENERATE_NORM = 1e-12


def family(cid: str) -> str:
    if cid in OMEGA_IDS:
        return "omega"
    if cid in PSI_IDS:
        return "psi"
    if cid in RELATIVE_DEGREE:
        return cid
    raise KeyError(f"unknown constraint {cid!r}")


def axis_of(cid: str) -> int:
    return int(cid[-1]) - 1


@dataclass(frozen=True)
class ConstraintDef:
    id: str
    relative_degree: int
    gains: tuple[float, float]
    sigma: float
    slack_eligible: bool = False


def constraint_defs(p: SpacecraftParams, slacked=(COMMUNICATION,)) -> list[ConstraintDef]:
    out = []
    for cid in CONSTRAINT_IDS:
        fam = family(cid)
        out.append(ConstraintDef(cid, RELATIVE_DEGREE[cid], p.tuning.gains[fam],
                                 p.tuning.sigma[fam], cid in slacked))
    return out


@dataclass
class BarrierRow:
    """``BC(x, u) = a @ u + b``."""

    a: np.ndarray
    b: float
    constraint_id: str
    active: bool = True
    authority_loss: bool = False

    def value(self, u) -> float:
        return float(self.a @ np.asarray(u, dtype=float) + self.b)


@dataclass(frozen=True)
class ControlBounds:
    lower: np.ndarray
    upper: np.ndarray

    def clip(self, u) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(u, dtype=float), self.lower), self.upper)

    def contains(self, u, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


# -- constraint functions --------------------------------------------------------

def _angle(x, body_axis, target) -> float:
    return ad.arccos(cosine_jet(x, body_axis, target, order=1)).val


def h_exclusion(state, p: SpacecraftParams) -> float:
    x = as_vector(state)
    return _angle(x, SENSOR_AXIS, "sun") - 0.5 * p.fov_ez - p.buffer_ez


def h_comm(state, p: SpacecraftParams) -> float:
    x = as_vector(state)
    return 0.5 * p.fov_comm - _angle(x, ANTENNA_AXIS, "earth")


def psi_temp(state, p: SpacecraftParams) -> float:
    x = as_vector(state)
    return _temp_jet(x, p, 1).val


def psi_batt(state, p: SpacecraftParams) -> float:
    x = as_vector(state)
    return x[E_IDX] - p.e_min - p.tuning.delta2 * _angle(x, PANEL_AXIS, "sun")


def h_temp(state, p: SpacecraftParams) -> float:
    return p.t_max - as_vector(state)[T_IDX]


def h_batt(state, p: SpacecraftParams) -> float:
    return as_vector(state)[E_IDX] - p.e_min


def h_omega(state, axis: int, p: SpacecraftParams) -> float:
    w = as_vector(state)[W][axis - 1]
    return p.omega_max**2 - w * w


def h_psi(state, axis: int, p: SpacecraftParams) -> float:
    s = as_vector(state)[PSI][axis - 1]
    return p.psi_max**2 - s * s


def _incidence_margin(cos_jet: ad.Jet) -> ad.Jet:
    # pi/2 - theta with theta clamped to [0, pi/2]: zero once the surface faces away
    return ad.relu(HALF_PI - ad.arccos(cos_jet))


def _temp_jet(x, p: SpacecraftParams, order: int, cos_sun=None, cos_earth=None) -> ad.Jet:
    cos_sun = cos_sun if cos_sun is not None else cosine_jet(x, THERMAL_FACE, "sun", order)
    cos_earth = cos_earth if cos_earth is not None else cosine_jet(x, THERMAL_FACE, "earth", order)
    temp = ad.Jet.variable(x[T_IDX], T_IDX, N_STATE, order)
    return (p.t_max - temp
            - p.tuning.delta0 * _incidence_margin(cos_sun)
            - p.tuning.delta1 * _incidence_margin(cos_earth))


def constraint_jet(cid: str, state, p: SpacecraftParams, order: int = 2, cache=None) -> ad.Jet:
    """Constraint value with gradient (and Hessian for ``order=2``)."""
    x = as_vector(state)
    cache = {} if cache is None else cache

    def cosj(axis, target):
        key = (tuple(axis), target)
        if key not in cache:
            cache[key] = cosine_jet(x, axis, target, order)
        return cache[key]

    if cid == EXCLUSION:
        return ad.arccos(cosj(SENSOR_AXIS, "sun")) - (0.5 * p.fov_ez + p.buffer_ez)
    if cid == COMMUNICATION:
        return 0.5 * p.fov_comm - ad.arccos(cosj(ANTENNA_AXIS, "earth"))
    if cid == TEMPERATURE:
        return _temp_jet(x, p, order, cosj(THERMAL_FACE, "sun"), cosj(THERMAL_FACE, "earth"))
    if cid == BATTERY:
        energy = ad.Jet.variable(x[E_IDX], E_IDX, N_STATE, order)
        return energy - p.e_min - p.tuning.delta2 * ad.arccos(cosj(PANEL_AXIS, "sun"))
    if cid in OMEGA_IDS or cid in PSI_IDS:
        base, limit = (4, p.omega_max) if cid in OMEGA_IDS else (7, p.psi_max)
        idx = base + axis_of(cid)
        v = ad.Jet.variable(x[idx], idx, N_STATE, order)
        return limit * limit - v * v
    raise KeyError(f"unknown constraint {cid!r}")


def constraint_value(cid: str, state, p: SpacecraftParams) -> float:
    return constraint_jet(cid, state, p, order=1).val


def gradient(cid: str, state, p: SpacecraftParams) -> np.ndarray:
    return constraint_jet(cid, state, p, order=1).grad


# -- lifting and rows --------------------------------------------------------------

class _Context:
    """Per-state quantities shared by all rows."""

    def __init__(self, x: np.ndarray, p: SpacecraftParams):
        self.x = x
        self.p = p
        self.f, self.jac = drift_jacobian(x, p)
        self.g = control_matrix(p)
        self.cache: dict = {}


def _lifted(cid: str, ctx: _Context):
    """Return ``(h, Psi1, grad Psi1)`` for a relative-degree-2 constraint."""
    jet = constraint_jet(cid, ctx.x, ctx.p, order=2, cache=ctx.cache)
    c1 = ctx.p.tuning.gains[family(cid)][0]
    psi1 = float(jet.grad @ ctx.f) + c1 * jet.val
    grad_psi1 = jet.hess @ ctx.f + ctx.jac.T @ jet.grad + c1 * jet.grad
    return jet.val, psi1, grad_psi1


def _row(cid: str, ctx: _Context) -> BarrierRow:
    fam = family(cid)
    c1, c2 = ctx.p.tuning.gains[fam]
    sigma = ctx.p.tuning.sigma[fam]
    if RELATIVE_DEGREE[cid] == 1:
        # h = limit^2 - v^2 depends on a single state, so grad h = -2 v e_idx
        base, limit = (4, ctx.p.omega_max) if cid in OMEGA_IDS else (7, ctx.p.psi_max)
        idx = base + axis_of(cid)
        v = ctx.x[idx]
        a = -2.0 * v * ctx.g[idx]
        b = -2.0 * v * float(ctx.f[idx]) + c1 * (limit * limit - v * v) + sigma
    else:
        _, psi1, grad_psi1 = _lifted(cid, ctx)
        a = ctx.g.T @ grad_psi1
        b = float(grad_psi1 @ ctx.f) + c2 * psi1 + sigma
    row = BarrierRow(a, b, cid)
    if np.linalg.norm(a) < DEGENERATE_NORM:
        row.active = False
        row.authority_loss = b < 0.0
    return row


def lift_and_rowify(cid: str, state, p: SpacecraftParams) -> BarrierRow:
    return _row(cid, _Context(as_vector(state), p))


def barrier_rows(state, p: SpacecraftParams, constraint_ids=CONSTRAINT_IDS) -> list[BarrierRow]:
    ctx = _Context(as_vector(state), p)
    return [_row(cid, ctx) for cid in constraint_ids]


def lifted_value(cid: str, state, p: SpacecraftParams) -> float:
    """First HOCBF lifting ``Psi1`` (the constraint itself for degree 1)."""
    if RELATIVE_DEGREE[cid] == 1:
        return constraint_value(cid, state, p)
    return _lifted(cid, _Context(as_vector(state), p))[1]


# -- admissible control set ------------------------------------------------------------

def control_bounds(omega_max: float, omegadot_max: float, psidot_max: float,
                   p: SpacecraftParams) -> ControlBounds:
    """Wheel-acceleration box that keeps ``|wdot| <= omegadot_max``."""
    j = p.J
    bound = np.empty(3)
    for i in range(3):
        num = j[i] * omegadot_max - abs(j[(i + 1) % 3] - j[(i + 2) % 3]) * omega_max**2
        if num <= 0.0:
            raise ValueError(f"axis {i + 1}: aggressive-maneuvering bound is not positive ({num:.3g})")
        bound[i] = min(num / p.D, psidot_max)
    return ControlBounds(-bound, bound)


def default_bounds(p: SpacecraftParams) -> ControlBounds:
    return control_bounds(p.omega_max, p.omegadot_max, p.psidot_max, p)


def rate_guard_bounds(state, p: SpacecraftParams, dt: float, margin: float,
                      box: ControlBounds) -> ControlBounds:
    """Tighten ``box`` so one held-control step keeps ``w`` and ``psi`` in limits.

    The prediction is first order in ``dt``; ``margin`` (a fraction of each
    limit) absorbs the gyroscopic drift over the step. If the guard interval
    misses the box, the bound collapses onto the guard midpoint clipped into
    the box.
    """
    x = as_vector(state)
    j1, j2, j3 = p.J
    w = x[W]
    gyro = np.array([(j2 - j3) * w[1] * w[2] / j1, (j3 - j1) * w[2] * w[0] / j2,
                     (j1 - j2) * w[0] * w[1] / j3])
    gain = p.wheel_sign * p.D / np.asarray(p.J)
    w_lim = (1.0 - margin) * p.omega_max
    s_lim = (1.0 - margin) * p.psi_max
    lo = box.lower.copy()
    hi = box.upper.copy()
    for i in range(3):
        # w_i + dt*(gyro_i + gain_i*u) in [-w_lim, w_lim]
        a = (-w_lim - w[i] - dt * gyro[i]) / (dt * gain[i])
        b = (w_lim - w[i] - dt * gyro[i]) / (dt * gain[i])
        g_lo, g_hi = min(a, b), max(a, b)
        s = x[7 + i]
        g_lo = max(g_lo, (-s_lim - s) / dt)
        g_hi = min(g_hi, (s_lim - s) / dt)
        new_lo, new_hi = max(lo[i], g_lo), min(hi[i], g_hi)
        if new_lo > new_hi:
            edge = min(max(0.5 * (g_lo + g_hi), box.lower[i]), box.upper[i])
            new_lo = new_hi = edge
        lo[i], hi[i] = new_lo, new_hi
    return ControlBounds(lo, hi)

"""Primary controllers feeding the safety filter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Q, W, as_vector
from .params import SpacecraftParams
from .quaternion import inverse, multiply

IDENTITY_Q = (0.0, 0.0, 0.0, 1.0)
FLIP_Y_Q = (0.0, 1.0, 0.0, 0.0)


def error_quaternion(q, qc) -> np.ndarray:
    """Vector part of ``q (x) qc^-1``."""
    return multiply(q, inverse(qc))[:3]


def _default_schedule():
    return ((0.0, IDENTITY_Q), (1000.0, FLIP_Y_Q))


@dataclass(frozen=True)
class PdConfig:
    kp: float = 0.2
    kd: float = 1.5
    schedule: tuple = field(default_factory=_default_schedule)

    def __post_init__(self) -> None:
        sched = tuple((float(t), tuple(float(v) for v in qc)) for t, qc in self.schedule)
        if not sched:
            raise ValueError("PD schedule must not be empty")
        times = [t for t, _ in sched]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("PD schedule times must be strictly increasing")
        for _, qc in sched:
            if len(qc) != 4 or abs(np.linalg.norm(qc) - 1.0) > 1e-6:
                raise ValueError(f"commanded quaternion {qc} is not unit norm")
        object.__setattr__(self, "schedule", sched)

    def command(self, t: float) -> np.ndarray:
        active = self.schedule[0][1]
        for start, qc in self.schedule:
            if start <= t:
                active = qc
        return np.array(active)


def pd_control(state, cfg: PdConfig, t: float, p: SpacecraftParams) -> np.ndarray:
    x = as_vector(state)
    dq = error_quaternion(x[Q], cfg.command(t))
    return p.psidot_max * np.tanh(-cfg.kp * dq - cfg.kd * x[W])


def zero_control(*_args, **_kwargs) -> np.ndarray:
    return np.zeros(3)


class PdController:
    def __init__(self, cfg: PdConfig, p: SpacecraftParams):
        self.cfg = cfg
        self.p = p

    def __call__(self, state, t: float) -> np.ndarray:
        return pd_control(state, self.cfg, t, self.p)


class ZeroController:
    def __call__(self, state, t: float) -> np.ndarray:
        return np.zeros(3)

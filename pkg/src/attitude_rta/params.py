"""Physical constants, limits and barrier tuning for the 6U CubeSat model.

All values are SI with temperatures in Kelvin. Celsius only appears at the
config/report boundary (see ``c_to_k`` / ``k_to_c``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Mapping

KELVIN_OFFSET = 273.15

# Constraint families that carry their own class-kappa gains and bias.
FAMILIES = ("exclusion", "communication", "temperature", "battery", "omega", "psi")


def c_to_k(celsius: float) -> float:
    return celsius + KELVIN_OFFSET


def k_to_c(kelvin: float) -> float:
    return kelvin - KELVIN_OFFSET


@dataclass(frozen=True)
class Tuning:
    """Barrier tuning knobs.

    ``gains[family]`` holds the linear class-kappa gains, one per lifting
    level (1/s). Relative-degree-1 families only use the first entry.
    ``sigma[family]`` is the additive bias of the barrier condition.
    """

    gains: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {
            "exclusion": (0.05, 0.1),
            "communication": (0.05, 0.1),
            "temperature": (0.05, 0.1),
            "battery": (0.05, 0.1),
            "omega": (0.5, 0.5),
            "psi": (0.5, 0.5),
        }
    )
    sigma: Mapping[str, float] = field(default_factory=lambda: {f: 0.0 for f in FAMILIES})
    delta0: float = 1.0
    delta1: float = 0.5
    delta2: float = 500.0
    slack_penalty: float = 1e12

    def __post_init__(self) -> None:
        gains = {k: tuple(float(g) for g in v) for k, v in self.gains.items()}
        sigma = {k: float(v) for k, v in self.sigma.items()}
        for fam in FAMILIES:
            gains.setdefault(fam, (0.1, 0.1))
            sigma.setdefault(fam, 0.0)
        for fam, g in gains.items():
            if fam not in FAMILIES:
                raise ValueError(f"tuning.gains: unknown constraint family {fam!r}")
            if len(g) != 2 or min(g) <= 0.0:
                raise ValueError(f"tuning.gains.{fam}: need two positive gains, got {g}")
        for fam in sigma:
            if fam not in FAMILIES:
                raise ValueError(f"tuning.sigma: unknown constraint family {fam!r}")
        if min(self.delta0, self.delta1, self.delta2) < 0.0:
            raise ValueError("tuning: delta0, delta1, delta2 must be non-negative")
        if self.slack_penalty <= 0.0:
            raise ValueError("tuning.slack_penalty must be positive")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "sigma", sigma)

    def to_dict(self) -> dict:
        return {
            "gains": {k: list(v) for k, v in self.gains.items()},
            "sigma": dict(self.sigma),
            "delta0": self.delta0,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "slack_penalty": self.slack_penalty,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Tuning":
        data = dict(data)
        if "gains" in data:
            data["gains"] = {k: tuple(v) for k, v in data["gains"].items()}
        return cls(**data)


def default_tuning() -> Tuning:
    """Tuning shipped with the package (output of ``calibrate_tuning``)."""
    text = resources.files("attitude_rta").joinpath("data/tuning.json").read_text()
    return Tuning.from_dict(json.loads(text)["tuning"])


@dataclass(frozen=True)
class SpacecraftParams:
    # rigid body and wheels
    J: tuple[float, float, float] = (0.022, 0.044, 0.056)
    D: float = 4.1e-5
    wheel_sign: float = 1.0  # torque = wheel_sign * D * psidot

    # thermal node (the -j_B face)
    mass_node: float = 2.0
    area_node: float = 0.03
    cp: float = 900.0
    absorptivity: float = 0.13
    emissivity: float = 0.06
    solar_constant: float = 1367.0
    albedo_factor: float = 0.27
    view_factor: float = 0.8
    earth_temp: float = 255.0
    stefan_boltzmann: float = 5.67051e-8

    # power
    panel_area: float = 0.03
    ideal_perf: float = 983.3  # W/m^2
    degradation: float = 0.77
    power_out: float = 15.0

    mean_motion: float = 0.001027

    # limits
    omega_max: float = math.radians(1.0)
    omegadot_max: float = math.radians(2.0)
    psi_max: float = 576.0
    psidot_max: float = 181.3

    # constraint geometry
    fov_ez: float = math.radians(60.0)
    buffer_ez: float = math.radians(10.0)
    fov_comm: float = math.radians(180.0)
    t_max: float = c_to_k(10.0)
    e_min: float = 1000.0

    tuning: Tuning = field(default_factory=default_tuning)

    def __post_init__(self) -> None:
        object.__setattr__(self, "J", tuple(float(j) for j in self.J))
        if len(self.J) != 3:
            raise ValueError("J must have three principal inertias")
        positive = ("D", "mass_node", "area_node", "cp", "panel_area", "omega_max",
                    "omegadot_max", "psi_max", "psidot_max", "t_max")
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if min(self.J) <= 0.0:
            raise ValueError("J entries must be strictly positive")
        if self.wheel_sign not in (1.0, -1.0):
            raise ValueError("wheel_sign must be +1 or -1")

    def with_tuning(self, tuning: Tuning) -> "SpacecraftParams":
        return replace(self, tuning=tuning)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "tuning"}
        out["J"] = list(self.J)
        out["tuning"] = self.tuning.to_dict()
        return out


__all__ = [
    "FAMILIES",
    "KELVIN_OFFSET",
    "SpacecraftParams",
    "Tuning",
    "c_to_k",
    "default_tuning",
    "k_to_c",
]

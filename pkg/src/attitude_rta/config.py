"""Run configuration: a nested JSON key-value file with a default for every key.

All quantities are SI (kelvin, joules, radians, seconds). Omitted keys take
their defaults, unknown keys and out-of-range values are rejected with the
dotted key path of the offending entry.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from .barriers import CONSTRAINT_IDS
from .controllers import PdConfig
from .dynamics import FullState
from .filter import FilterConfig
from .harness import EpisodeConfig, SampleRanges, reference_initial_state
from .params import SpacecraftParams, Tuning, default_tuning


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the key path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


# Keys that must be strictly positive / non-negative (spacecraft section).
_POSITIVE = {"D", "mass_node", "area_node", "cp", "solar_constant", "panel_area", "ideal_perf",
             "mean_motion", "omega_max", "omegadot_max", "psi_max", "psidot_max", "fov_ez",
             "fov_comm", "t_max", "stefan_boltzmann"}
_NON_NEGATIVE = {"absorptivity", "emissivity", "albedo_factor", "view_factor", "earth_temp",
                 "degradation", "power_out", "buffer_ez", "e_min"}


@dataclass(frozen=True)
class CampaignConfig:
    n: int
    seed: int
    workers: int
    template: EpisodeConfig
    ranges: SampleRanges


@dataclass(frozen=True)
class Config:
    params: SpacecraftParams
    filter: FilterConfig
    episode: EpisodeConfig
    campaign: CampaignConfig


def _state_dict(s: FullState) -> dict:
    return {"q": list(map(float, s.q)), "omega": list(map(float, s.omega)),
            "psi": list(map(float, s.psi)), "T": float(s.T), "E": float(s.E),
            "theta_s": float(s.theta_s)}


def _ranges_dict(r: SampleRanges) -> dict:
    return {"omega": list(r.omega), "psi": list(r.psi), "T": list(r.T), "E": list(r.E),
            "theta_s": list(r.theta_s),
            "quaternion": None if r.quaternion is None else list(r.quaternion)}


def _pd_dict(pd: PdConfig) -> dict:
    return {"kp": pd.kp, "kd": pd.kd, "schedule": [[t, list(q)] for t, q in pd.schedule]}


def _filter_dict(fc: FilterConfig) -> dict:
    return {"enabled": list(fc.enabled), "slacked": list(fc.slacked),
            "penalties": dict(fc.penalties), "rate_guard": fc.rate_guard,
            "guard_margin": fc.guard_margin, "warm_start": fc.warm_start}


def _spacecraft_dict(p: SpacecraftParams) -> dict:
    d = p.to_dict()
    d.pop("tuning")
    return d


def default_dict() -> dict:
    """The full default configuration (every key that may appear in a file)."""
    p = SpacecraftParams(tuning=default_tuning())
    pd = PdConfig()
    return {
        "spacecraft": _spacecraft_dict(p),
        "tuning": p.tuning.to_dict(),
        "filter": _filter_dict(FilterConfig()),
        "episode": {
            "duration": 2000.0,
            "dt": 1.0,
            "controller": "pd",
            "rta": True,
            "pd": _pd_dict(pd),
            "initial_state": _state_dict(reference_initial_state()),
            "seed": 0,
            "buffer": 0.05,
            "substeps": 1,
        },
        "campaign": {
            "n": 200,
            "seed": 0,
            "workers": 1,
            "controller": "zero",
            "ranges": _ranges_dict(SampleRanges.default(p)),
        },
    }


# Sub-trees whose keys are free-form (validated by the dataclasses instead).
_OPEN = {"tuning.gains", "tuning.sigma", "filter.penalties", "episode.initial_state",
         "campaign.ranges.quaternion"}


def _merge(default: Any, given: Any, path: str) -> Any:
    if path in _OPEN:
        if isinstance(default, dict) and isinstance(given, dict):
            out = dict(default)
            out.update(given)
            return out
        return given
    if isinstance(default, dict):
        if not isinstance(given, dict):
            raise ConfigError(path or "<root>", "expected an object")
        unknown = sorted(set(given) - set(default))
        if unknown:
            raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}", "unknown key")
        return {k: _merge(v, given[k], f"{path + '.' if path else ''}{k}") if k in given else
                copy.deepcopy(v) for k, v in default.items()}
    if isinstance(default, bool):
        if not isinstance(given, bool):
            raise ConfigError(path, f"expected true/false, got {given!r}")
        return given
    if isinstance(default, (int, float)):
        return _number(given, path, integral=isinstance(default, int))
    if isinstance(default, list) and default and all(isinstance(v, (int, float)) for v in default):
        if not isinstance(given, list) or len(given) != len(default):
            raise ConfigError(path, f"expected a list of {len(default)} numbers")
        return [_number(v, f"{path}[{i}]") for i, v in enumerate(given)]
    return given


def _number(v: Any, path: str, integral: bool = False):
    if isinstance(v, bool):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if isinstance(v, str):
        try:
            v = float(v)
        except ValueError:
            raise ConfigError(path, f"expected a number, got {v!r}") from None
    if not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    if integral:
        if float(v) != int(v):
            raise ConfigError(path, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _build(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(path, str(exc)) from None


def _ids(values, path: str) -> tuple[str, ...]:
    if not isinstance(values, list):
        raise ConfigError(path, "expected a list of constraint ids")
    for i, v in enumerate(values):
        if v not in CONSTRAINT_IDS:
            raise ConfigError(f"{path}[{i}]", f"unknown constraint {v!r}")
    return tuple(values)


def _controller(name: Any, pd: PdConfig, path: str):
    if name == "zero":
        return "zero"
    if name == "pd":
        return pd
    raise ConfigError(path, f"controller must be 'zero' or 'pd', got {name!r}")


def from_dict(data: dict) -> Config:
    d = _merge(default_dict(), data, "")
    sc = d["spacecraft"]
    for key in _POSITIVE:
        if not sc[key] > 0.0:
            raise ConfigError(f"spacecraft.{key}", f"must be strictly positive, got {sc[key]!r}")
    for key in _NON_NEGATIVE:
        if sc[key] < 0.0:
            raise ConfigError(f"spacecraft.{key}", f"must be non-negative, got {sc[key]!r}")
    for i, j in enumerate(sc["J"]):
        if not j > 0.0:
            raise ConfigError(f"spacecraft.J[{i}]", f"must be strictly positive, got {j!r}")
    if sc["wheel_sign"] not in (1.0, -1.0):
        raise ConfigError("spacecraft.wheel_sign", "must be +1 or -1")
    tuning = _build("tuning", Tuning.from_dict, d["tuning"])
    sc_fields = {f.name for f in fields(SpacecraftParams)}
    params = _build("spacecraft", SpacecraftParams,
                    **{k: v for k, v in sc.items() if k in sc_fields}, tuning=tuning)
    _build("spacecraft", _check_bounds, params)

    fd = d["filter"]
    enabled = _ids(fd["enabled"], "filter.enabled")
    slacked = _ids(fd["slacked"], "filter.slacked")
    if not isinstance(fd["penalties"], dict):
        raise ConfigError("filter.penalties", "expected an object")
    for k, v in fd["penalties"].items():
        if k not in CONSTRAINT_IDS:
            raise ConfigError(f"filter.penalties.{k}", "unknown constraint")
        if not _number(v, f"filter.penalties.{k}") > 0.0:
            raise ConfigError(f"filter.penalties.{k}", "must be strictly positive")
    if enabled and set(enabled) <= set(slacked):
        raise ConfigError("filter.slacked", "slack may not cover every enabled constraint")
    ep = d["episode"]
    fcfg = _build("filter", FilterConfig, enabled=enabled, slacked=slacked,
                  penalties={k: float(v) for k, v in fd["penalties"].items()},
                  rate_guard=fd["rate_guard"], guard_margin=fd["guard_margin"], dt=ep["dt"],
                  warm_start=fd["warm_start"])

    pd = _build("episode.pd", PdConfig, kp=ep["pd"]["kp"], kd=ep["pd"]["kd"],
                schedule=tuple((t, tuple(q)) for t, q in ep["pd"]["schedule"]))
    if ep["substeps"] < 1:
        raise ConfigError("episode.substeps", "must be >= 1")
    if not 0.0 <= ep["buffer"] < 1.0:
        raise ConfigError("episode.buffer", "must be in [0, 1)")
    init = None
    if ep["initial_state"] is not None:
        init = _build("episode.initial_state", _parse_state, ep["initial_state"])
    cd = d["campaign"]
    rd = cd["ranges"]
    ranges = _build("campaign.ranges", SampleRanges, omega=tuple(rd["omega"]), psi=tuple(rd["psi"]),
                    T=tuple(rd["T"]), E=tuple(rd["E"]), theta_s=tuple(rd["theta_s"]),
                    quaternion=None if rd["quaternion"] is None else tuple(float(v) for v in rd["quaternion"]))
    episode = _build("episode", EpisodeConfig, duration=ep["duration"], dt=ep["dt"],
                     controller=_controller(ep["controller"], pd, "episode.controller"),
                     rta_enabled=ep["rta"], filter_config=fcfg, initial_state=init,
                     seed=ep["seed"], ranges=ranges, buffer=ep["buffer"], substeps=ep["substeps"])
    if cd["n"] < 1:
        raise ConfigError("campaign.n", "must be >= 1")
    if cd["workers"] < 1:
        raise ConfigError("campaign.workers", "must be >= 1")
    template = replace(episode, controller=_controller(cd["controller"], pd, "campaign.controller"),
                       initial_state=None)
    campaign = CampaignConfig(cd["n"], cd["seed"], cd["workers"], template, ranges)
    return Config(params, fcfg, episode, campaign)


def _check_bounds(p: SpacecraftParams) -> None:
    from .barriers import default_bounds

    default_bounds(p)


def _parse_state(d: dict) -> FullState:
    unknown = sorted(set(d) - {"q", "omega", "psi", "T", "E", "theta_s"})
    if unknown:
        raise ConfigError(f"episode.initial_state.{unknown[0]}", "unknown key")
    s = FullState(*(d[k] for k in ("q", "omega", "psi", "T", "E", "theta_s")))
    s.validate()
    return s


def to_dict(cfg: Config) -> dict:
    """Serialize a parsed configuration back to the file schema."""
    ep = cfg.episode
    pd = ep.controller if isinstance(ep.controller, PdConfig) else (
        cfg.campaign.template.controller if isinstance(cfg.campaign.template.controller, PdConfig)
        else PdConfig())
    return {
        "spacecraft": _spacecraft_dict(cfg.params),
        "tuning": cfg.params.tuning.to_dict(),
        "filter": _filter_dict(cfg.filter),
        "episode": {
            "duration": ep.duration,
            "dt": ep.dt,
            "controller": "zero" if ep.controller == "zero" else "pd",
            "rta": ep.rta_enabled,
            "pd": _pd_dict(pd),
            "initial_state": None if ep.initial_state is None else _state_dict(ep.initial_state),
            "seed": ep.seed,
            "buffer": ep.buffer,
            "substeps": ep.substeps,
        },
        "campaign": {
            "n": cfg.campaign.n,
            "seed": cfg.campaign.seed,
            "workers": cfg.campaign.workers,
            "controller": "zero" if cfg.campaign.template.controller == "zero" else "pd",
            "ranges": _ranges_dict(cfg.campaign.ranges),
        },
    }


def parse_config(path: str | Path | None) -> Config:
    """Load and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return from_dict({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"not valid JSON ({exc.msg}, line {exc.lineno})") from None
    return from_dict(data)


def load_tuning(path: str | Path) -> Tuning:
    """Read a tuning file written by the ``calibrate`` mode."""
    data = json.loads(Path(path).read_text())
    return _build("tuning", Tuning.from_dict, data.get("tuning", data))


def dumps(cfg: Config) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"

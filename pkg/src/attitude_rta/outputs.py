"""Trajectory CSV, campaign JSON and plot-ready panel files.

Numbers are written with ``repr`` (shortest round-tripping decimal), files
use LF line endings, and nothing time- or host-dependent is recorded, so
identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .barriers import CONSTRAINT_IDS
from .dynamics import ANTENNA_AXIS, EARTH_DIR, PANEL_AXIS, SENSOR_AXIS, omega_dot, sun_vector
from .harness import CampaignSummary, EpisodeResult
from .params import SpacecraftParams, k_to_c
from .quaternion import dcm

STATE_COLUMNS = ["q1", "q2", "q3", "q4", "w1", "w2", "w3", "psi1", "psi2", "psi3", "T_C", "E_J", "theta_s"]


def trajectory_columns(slacked=()) -> list[str]:
    return (["t"] + STATE_COLUMNS + ["theta_sun_sensor", "theta_earth_antenna"]
            + ["udes1", "udes2", "udes3", "uact1", "uact2", "uact3"]
            + [f"margin_{cid}" for cid in CONSTRAINT_IDS]
            + [f"slack_{cid}" for cid in slacked] + ["qp_status"])


def _fmt(v: float) -> str:
    return repr(float(v))


def _angle(body_axis, target_hill, q) -> float:
    b = dcm(q).T @ np.asarray(body_axis, dtype=float)
    return math.acos(max(-1.0, min(1.0, float(b @ target_hill))))


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_trajectory_csv(result: EpisodeResult, path) -> Path:
    """One row per step: the state at the start of the step and what was applied."""
    n = result.n_steps
    if n == 0:
        raise ValueError("empty episode")
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_columns(result.slacked))
        for k in range(n):
            x = result.states[k]
            if not np.all(np.isfinite(x)):
                break  # integration failed before this step
            row = [_fmt(result.times[k])] + [_fmt(v) for v in x[:10]]
            row += [_fmt(k_to_c(x[10])), _fmt(x[11]), _fmt(x[12])]
            row += [_fmt(_angle(SENSOR_AXIS, sun_vector(x[12]), x[:4])),
                    _fmt(_angle(ANTENNA_AXIS, EARTH_DIR, x[:4]))]
            row += [_fmt(v) for v in result.u_des[k]] + [_fmt(v) for v in result.u_act[k]]
            row += [_fmt(v) for v in result.margins[k]]
            row += [_fmt(v) for v in result.slack[k]]
            row.append(result.qp_status[k])
            w.writerow(row)
    return path


def read_trajectory_csv(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def campaign_dict(summary: CampaignSummary) -> dict:
    return {
        "nEpisodes": summary.n_episodes,
        "successRate": summary.success_rate,
        "perConstraintPct": summary.per_constraint_pct,
        "perCountPct": summary.per_count_pct,
        "seeds": summary.seeds,
        "rootSeed": summary.root_seed,
        "tuning": summary.tuning,
        "episodes": [
            {"index": e.index, "seed": e.seed, "passed": e.passed, "violated": list(e.violated),
             "interventionRate": e.intervention_rate, "initialState": e.initial_state}
            for e in summary.episodes
        ],
    }


def write_json(data: dict, path) -> Path:
    path = Path(path)
    with _open(path) as fh:
        fh.write(json.dumps(data, indent=2, allow_nan=False) + "\n")
    return path


def write_campaign_json(summary: CampaignSummary, path) -> Path:
    return write_json(campaign_dict(summary), path)


def episode_dict(result: EpisodeResult) -> dict:
    return {
        "nSteps": result.n_steps,
        "passed": result.passed,
        "violated": list(result.violated),
        "interventionRate": result.intervention_rate,
        "slacked": list(result.slacked),
        "seed": result.seed,
        "diagnostic": result.diagnostic,
        "minMargins": {cid: float(np.nanmin(result.margin(cid))) for cid in CONSTRAINT_IDS},
    }


# -- plot panels --------------------------------------------------------------------

def _panel(path: Path, header: list[str], rows) -> None:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def emit_plot_data(result: EpisodeResult, path, p: SpacecraftParams) -> dict:
    """Write one CSV per figure panel plus ``panels.json`` describing them.

    Each panel file holds ``t``, the value traces and constant boundary
    columns (``bound_*``). Angles are in degrees, rates in deg/s and
    deg/s^2, temperature in Celsius and energy in kJ.
    """
    out = Path(path)
    ok = np.all(np.isfinite(result.states), axis=1)
    xs = result.states[ok]
    ts = result.times[ok]
    n_ctrl = min(len(xs), result.n_steps)
    deg = math.degrees

    sun_bound = deg(0.5 * p.fov_ez + p.buffer_ez)
    comm_bound = deg(0.5 * p.fov_comm)
    panels = {
        "sun_angle": (["t", "theta_sun_sensor_deg", "bound_lower"],
                      [(t, deg(_angle(SENSOR_AXIS, sun_vector(x[12]), x[:4])), sun_bound) for t, x in zip(ts, xs)],
                      {"lower": sun_bound}),
        "earth_angle": (["t", "theta_earth_antenna_deg", "bound_upper"],
                        [(t, deg(_angle(ANTENNA_AXIS, EARTH_DIR, x[:4])), comm_bound) for t, x in zip(ts, xs)],
                        {"upper": comm_bound}),
        "temperature": (["t", "T_C", "bound_upper"],
                        [(t, k_to_c(x[10]), k_to_c(p.t_max)) for t, x in zip(ts, xs)],
                        {"upper": k_to_c(p.t_max)}),
        "energy": (["t", "E_kJ", "bound_lower"],
                   [(t, x[11] / 1000.0, p.e_min / 1000.0) for t, x in zip(ts, xs)],
                   {"lower": p.e_min / 1000.0}),
        "omega": (["t", "w1_dps", "w2_dps", "w3_dps", "bound_lower", "bound_upper"],
                  [(t, *np.degrees(x[4:7]), -deg(p.omega_max), deg(p.omega_max)) for t, x in zip(ts, xs)],
                  {"lower": -deg(p.omega_max), "upper": deg(p.omega_max)}),
        "omega_dot": (["t", "wd1_dps2", "wd2_dps2", "wd3_dps2", "bound_lower", "bound_upper"],
                      [(ts[k], *np.degrees(omega_dot(xs[k][4:7], result.u_act[k], p)),
                        -deg(p.omegadot_max), deg(p.omegadot_max)) for k in range(n_ctrl)],
                      {"lower": -deg(p.omegadot_max), "upper": deg(p.omegadot_max)}),
        "psi": (["t", "psi1", "psi2", "psi3", "bound_lower", "bound_upper"],
                [(t, *x[7:10], -p.psi_max, p.psi_max) for t, x in zip(ts, xs)],
                {"lower": -p.psi_max, "upper": p.psi_max}),
        "psi_dot": (["t", "u1", "u2", "u3", "bound_lower", "bound_upper"],
                    [(ts[k], *result.u_act[k], -p.psidot_max, p.psidot_max) for k in range(n_ctrl)],
                    {"lower": -p.psidot_max, "upper": p.psidot_max}),
    }
    index = {}
    for name, (header, rows, bounds) in panels.items():
        _panel(out / f"{name}.csv", header, rows)
        index[name] = {"file": f"{name}.csv", "columns": header, "bounds": bounds}

    vec_header = ["t", "sun_x", "sun_y", "sun_z", "sensor_x", "sensor_y", "sensor_z",
                  "antenna_x", "antenna_y", "antenna_z", "panel_x", "panel_y", "panel_z"]
    vec_rows = []
    for t, x in zip(ts, xs):
        a_t = dcm(x[:4]).T
        vec_rows.append((t, *sun_vector(x[12]), *(a_t @ SENSOR_AXIS), *(a_t @ ANTENNA_AXIS),
                         *(a_t @ PANEL_AXIS)))
    _panel(out / "vectors_3d.csv", vec_header, vec_rows)
    index["vectors_3d"] = {"file": "vectors_3d.csv", "columns": vec_header, "frame": "hill",
                           "bounds": {"exclusion_half_angle_deg": sun_bound}}
    write_json(index, out / "panels.json")
    return index

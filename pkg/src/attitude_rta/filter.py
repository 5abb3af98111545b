"""Active set invariance filter.

Intercepts the primary controller's command, builds the slacked barrier QP
for the current state and returns the closest admissible command that keeps
every barrier condition satisfied. When the QP cannot be solved the desired
command is passed through, clamped to the admissible actuator box (the
rate-guarded box when the guard is on), and the failure is reported in the
outcome.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import barriers as bar
from .barriers import CONSTRAINT_IDS, ControlBounds
from .dynamics import as_vector
from .params import SpacecraftParams
from .qp import QpProblem, QpSolver, QpStatus

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-6
INTERVENTION_TOL = 1e-9


@dataclass(frozen=True)
class FilterConfig:
    enabled: tuple[str, ...] = CONSTRAINT_IDS
    slacked: tuple[str, ...] = (bar.COMMUNICATION,)
    penalties: dict = field(default_factory=dict)  # constraint id -> p_i override
    fallback: str = "passthrough"
    rate_guard: bool = True
    guard_margin: float = 0.02
    dt: float = 1.0
    warm_start: bool = True
    dump_problems: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "enabled", tuple(self.enabled))
        object.__setattr__(self, "slacked", tuple(self.slacked))
        for cid in self.enabled + self.slacked + tuple(self.penalties):
            if cid not in CONSTRAINT_IDS:
                raise ValueError(f"unknown constraint {cid!r}")
        if not set(self.slacked) <= set(self.enabled):
            raise ValueError("slacked constraints must be enabled")
        if self.enabled and set(self.enabled) <= set(self.slacked):
            raise ValueError("at least one enabled constraint must stay unslacked")
        if self.fallback != "passthrough":
            raise ValueError(f"unsupported fallback {self.fallback!r}")
        if not 0.0 <= self.guard_margin < 1.0:
            raise ValueError("guard_margin must be in [0, 1)")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")


@dataclass
class FilterOutcome:
    u_act: np.ndarray
    u_des: np.ndarray
    intervened: bool
    qp_status: QpStatus
    slack_used: dict[str, float]
    row_margins: dict[str, float]
    box: ControlBounds
    authority_loss: tuple[str, ...] = ()


@dataclass
class SafetyReport:
    margins: dict[str, float]
    surrogates: dict[str, float]
    flags: dict[str, bool]
    safe: bool


def physical_margins(state, p: SpacecraftParams) -> dict[str, float]:
    x = as_vector(state)
    out = {
        bar.EXCLUSION: bar.h_exclusion(x, p),
        bar.COMMUNICATION: bar.h_comm(x, p),
        bar.TEMPERATURE: bar.h_temp(x, p),
        bar.BATTERY: bar.h_batt(x, p),
    }
    for k in range(3):
        out[bar.OMEGA_IDS[k]] = bar.h_omega(x, k + 1, p)
        out[bar.PSI_IDS[k]] = bar.h_psi(x, k + 1, p)
    return out


def evaluate_safety(state, p: SpacecraftParams, slacked=(bar.COMMUNICATION,),
                    tol: float = 0.0) -> SafetyReport:
    """Constraint margins and per-constraint safety flags.

    Flags use the physical constraints (``T <= T_max``, ``E >= E_min``);
    the tuned temperature/battery surrogates are reported alongside.
    """
    x = as_vector(state)
    margins = physical_margins(x, p)
    surrogates = {bar.TEMPERATURE: bar.psi_temp(x, p), bar.BATTERY: bar.psi_batt(x, p)}
    flags = {cid: m >= -tol for cid, m in margins.items()}
    safe = all(ok for cid, ok in flags.items() if cid not in slacked)
    return SafetyReport(margins, surrogates, flags, safe)


class AsifFilter:
    def __init__(self, p: SpacecraftParams, cfg: FilterConfig | None = None):
        self.p = p
        self.cfg = cfg or FilterConfig()
        self.box = bar.default_bounds(p)
        self.solver = QpSolver(warm_start=self.cfg.warm_start)
        self.events: list[tuple[str, str]] = []

    def admissible_box(self, x: np.ndarray) -> ControlBounds:
        if not self.cfg.rate_guard:
            return self.box
        return bar.rate_guard_bounds(x, self.p, self.cfg.dt, self.cfg.guard_margin, self.box)

    def __call__(self, state, u_des) -> FilterOutcome:
        return self.filter(state, u_des)

    def filter(self, state, u_des) -> FilterOutcome:
        x = as_vector(state)
        u_raw = np.asarray(u_des, dtype=float)
        u_clamped = self.box.clip(u_raw)
        cfg = self.cfg
        rows = bar.barrier_rows(x, self.p, cfg.enabled)
        lost = tuple(r.constraint_id for r in rows if r.authority_loss)
        for cid in lost:
            log.debug("authority loss on %s", cid)
            self.events.append(("authority_loss", cid))
        live = [r for r in rows if r.active]
        pen_default = self.p.tuning.slack_penalty
        penalties = [
            cfg.penalties.get(r.constraint_id, pen_default) if r.constraint_id in cfg.slacked else None
            for r in live
        ]
        box = self.admissible_box(x)
        problem = QpProblem(u_clamped, live, box, penalties)
        if cfg.dump_problems:
            log.debug("qp problem\n%s", problem.to_text())
        sol = self.solver.solve(problem)

        slack_used = {cid: 0.0 for cid in cfg.slacked}
        if sol.optimal:
            u_act = sol.u
            for k, i in enumerate(problem.slacked):
                slack_used[live[i].constraint_id] = float(sol.slacks[k])
        else:
            log.debug("QP %s; passing the desired control through", sol.status.value)
            self.events.append(("qp_failure", sol.status.value))
            u_act = box.clip(u_raw)
        margins = {r.constraint_id: r.value(u_act) for r in rows}
        intervened = bool(np.linalg.norm(u_act - u_raw) > INTERVENTION_TOL)
        return FilterOutcome(u_act, u_raw, intervened, sol.status, slack_used, margins, box, lost)


def filter_control(state, u_des, cfg: FilterConfig, p: SpacecraftParams) -> FilterOutcome:
    """One-shot filter call with a fresh solver."""
    return AsifFilter(p, cfg).filter(state, u_des)

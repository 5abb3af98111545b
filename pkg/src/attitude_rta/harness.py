"""Episodes, safe initial-condition sampling, Monte-Carlo campaigns and tuning.

Every episode is a pure function of its configuration and seed; campaign
seeds are split per episode index, so results do not depend on the number
of worker processes.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import barriers as bar
from .controllers import PdConfig, PdController, ZeroController
from .dynamics import FullState, IntegrationError, N_STATE, as_vector, step
from .filter import VIOLATION_TOL, AsifFilter, FilterConfig, physical_margins
from .params import SpacecraftParams, Tuning, c_to_k
from .quaternion import random_unit

log = logging.getLogger(__name__)

MARGIN_IDS = bar.CONSTRAINT_IDS


# -- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class SampleRanges:
    omega: tuple[float, float]
    psi: tuple[float, float]
    T: tuple[float, float]
    E: tuple[float, float]
    theta_s: tuple[float, float] = (0.0, 2.0 * math.pi)
    quaternion: tuple[float, float, float, float] | None = None  # fixed attitude if set

    def __post_init__(self) -> None:
        for name in ("omega", "psi", "T", "E", "theta_s"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"ranges.{name}: need finite lower <= upper, got {(lo, hi)}")

    @classmethod
    def default(cls, p: SpacecraftParams) -> "SampleRanges":
        return cls(
            omega=(-p.omega_max, p.omega_max),
            psi=(-p.psi_max, p.psi_max),
            T=(c_to_k(0.0), p.t_max),
            E=(p.e_min, 10_000.0),
        )

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper bounds of the nine stratified dimensions."""
        lo = [self.omega[0]] * 3 + [self.psi[0]] * 3 + [self.T[0], self.E[0], self.theta_s[0]]
        hi = [self.omega[1]] * 3 + [self.psi[1]] * 3 + [self.T[1], self.E[1], self.theta_s[1]]
        return np.array(lo), np.array(hi)


@dataclass(frozen=True)
class EpisodeConfig:
    duration: float = 2000.0
    dt: float = 1.0
    controller: str | PdConfig = "zero"
    rta_enabled: bool = True
    filter_config: FilterConfig = field(default_factory=FilterConfig)
    initial_state: FullState | None = None
    seed: int | None = None
    ranges: SampleRanges | None = None
    buffer: float = 0.05
    substeps: int = 1

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        n = self.duration / self.dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("duration must be a positive integer multiple of dt")
        if self.controller != "zero" and not isinstance(self.controller, PdConfig):
            raise ValueError("controller must be 'zero' or a PdConfig")
        if self.initial_state is None and self.seed is None:
            raise ValueError("need an explicit initial_state or a sampling seed")
        if self.filter_config.dt != self.dt:
            object.__setattr__(self, "filter_config", replace(self.filter_config, dt=self.dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def reference_initial_state() -> FullState:
    """Initial condition of the PD tracking example."""
    q = np.array([0.680, -0.151, 0.630, 0.343])
    return FullState(q / np.linalg.norm(q), np.zeros(3), np.zeros(3), c_to_k(8.5), 7300.0,
                     math.radians(525.0) % (2.0 * math.pi))


def reference_episode(rta: bool = True, slacked=(bar.COMMUNICATION,)) -> EpisodeConfig:
    return EpisodeConfig(controller=PdConfig(), rta_enabled=rta,
                         filter_config=FilterConfig(slacked=tuple(slacked)),
                         initial_state=reference_initial_state())


# -- sampling --------------------------------------------------------------------------

def latin_hypercube(n: int, dims: int, seed) -> np.ndarray:
    """``n`` x ``dims`` Latin hypercube sample in [0, 1)."""
    if n < 1 or dims < 1:
        raise ValueError("n and dims must be >= 1")
    return qmc.LatinHypercube(d=dims, seed=np.random.default_rng(seed)).random(n)


def episode_seed(root: int, index: int) -> int:
    """Counter-based child seed for episode ``index`` of a campaign."""
    ss = np.random.SeedSequence(root, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class SamplingError(RuntimeError):
    pass


def _checked_values(x: np.ndarray, p: SpacecraftParams) -> dict[str, float]:
    """Everything the rejection test looks at: h, Psi and the first lifting."""
    out = {}
    for cid in bar.CONSTRAINT_IDS:
        out[cid] = bar.constraint_value(cid, x, p)
        if bar.RELATIVE_DEGREE[cid] == 2:
            out[cid + ":lifted"] = bar.lifted_value(cid, x, p)
    margins = physical_margins(x, p)
    out["temperature:h"] = margins[bar.TEMPERATURE]
    out["battery:h"] = margins[bar.BATTERY]
    return out


_SCALE_CACHE: dict = {}


def constraint_scales(p: SpacecraftParams, ranges: SampleRanges, n: int = 2000) -> dict[str, float]:
    """Largest attainable value of each checked quantity over the sampling box."""
    key = (repr(p), repr(ranges), n)
    if key in _SCALE_CACHE:
        return _SCALE_CACHE[key]
    rng = np.random.default_rng(12345)
    lo, hi = ranges.box()
    best: dict[str, float] = {}
    for _ in range(n):
        x = _assemble(lo + rng.random(9) * (hi - lo), ranges, rng)
        for k, v in _checked_values(x, p).items():
            best[k] = max(best.get(k, 0.0), v)
    _SCALE_CACHE[key] = best
    return best


def _assemble(row: np.ndarray, ranges: SampleRanges, rng: np.random.Generator) -> np.ndarray:
    x = np.empty(N_STATE)
    x[:4] = np.asarray(ranges.quaternion, dtype=float) if ranges.quaternion is not None else random_unit(rng)
    x[:4] /= np.linalg.norm(x[:4])
    x[4:13] = row
    return x


def _shrunk_box(ranges: SampleRanges, buffer: float) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = ranges.box()
    inset = 0.5 * buffer * (hi - lo)
    inset[8] = 0.0  # the sun angle is periodic
    return lo + inset, hi - inset


def sample_safe_initial(ranges: SampleRanges, p: SpacecraftParams, seed, buffer: float = 0.05,
                        max_attempts: int = 10_000, batch: int = 64) -> FullState:
    """Draw a buffered-safe initial state.

    Candidates come from Latin hypercube batches over the shrunk ranges;
    a candidate is rejected if any constraint, surrogate or first lifting
    sits below ``buffer`` times its largest attainable value.
    """
    rng = np.random.default_rng(seed)
    lo, hi = _shrunk_box(ranges, buffer)
    scales = constraint_scales(p, ranges)
    rejected: Counter = Counter()
    attempts = 0
    while attempts < max_attempts:
        block = latin_hypercube(min(batch, max_attempts - attempts), 9, rng)
        for row in block:
            attempts += 1
            x = _assemble(lo + row * (hi - lo), ranges, rng)
            vals = _checked_values(x, p)
            binding = [k for k, v in vals.items() if v < buffer * scales.get(k, 0.0)]
            if not binding:
                return FullState.from_vector(x)
            rejected.update(binding)
    worst = rejected.most_common(1)[0][0] if rejected else "unknown"
    raise SamplingError(f"no safe initial state after {attempts} attempts (binding: {worst})")


# -- episodes -----------------------------------------------------------------------------

@dataclass
class EpisodeResult:
    times: np.ndarray
    states: np.ndarray  # (n+1, 13), includes the final state
    u_des: np.ndarray
    u_act: np.ndarray
    margins: np.ndarray  # (n+1, len(MARGIN_IDS)) physical margins
    slack: np.ndarray  # (n, len(slacked))
    qp_status: list[str]
    intervened: np.ndarray
    slacked: tuple[str, ...]
    passed: bool
    violated: tuple[str, ...]
    intervention_rate: float
    wall_time: float
    seed: int | None = None
    diagnostic: str = ""

    @property
    def n_steps(self) -> int:
        return len(self.u_act)

    def margin(self, cid: str) -> np.ndarray:
        return self.margins[:, MARGIN_IDS.index(cid)]


def _margin_row(x: np.ndarray, p: SpacecraftParams) -> list[float]:
    m = physical_margins(x, p)
    return [m[cid] for cid in MARGIN_IDS]


def resolve_initial(cfg: EpisodeConfig, p: SpacecraftParams) -> FullState:
    if cfg.initial_state is not None:
        return cfg.initial_state
    ranges = cfg.ranges or SampleRanges.default(p)
    return sample_safe_initial(ranges, p, cfg.seed, cfg.buffer)


def run_episode(cfg: EpisodeConfig, p: SpacecraftParams) -> EpisodeResult:
    start = time.perf_counter()
    x = as_vector(resolve_initial(cfg, p)).copy()
    n = cfg.n_steps
    slacked = cfg.filter_config.slacked if cfg.rta_enabled else ()
    controller = ZeroController() if cfg.controller == "zero" else PdController(cfg.controller, p)
    filt = AsifFilter(p, cfg.filter_config) if cfg.rta_enabled else None

    states = np.full((n + 1, N_STATE), np.nan)
    u_des = np.full((n, 3), np.nan)
    u_act = np.full((n, 3), np.nan)
    margins = np.full((n + 1, len(MARGIN_IDS)), np.nan)
    slack = np.zeros((n, len(slacked)))
    status: list[str] = []
    intervened = np.zeros(n, dtype=bool)
    states[0] = x
    margins[0] = _margin_row(x, p)
    diagnostic = ""
    done = n
    for k in range(n):
        t = k * cfg.dt
        ud = controller(x, t)
        if filt is not None:
            out = filt.filter(x, ud)
            ua = out.u_act
            status.append(out.qp_status.value)
            intervened[k] = out.intervened
            for j, cid in enumerate(slacked):
                slack[k, j] = out.slack_used.get(cid, 0.0)
        else:
            ua = ud
            status.append("Off")
        u_des[k], u_act[k] = ud, ua
        try:
            x = step(x, ua, cfg.dt, p, cfg.substeps)
        except IntegrationError as exc:
            diagnostic = f"step {k}: {exc}"
            log.warning("integration failed at %s", diagnostic)
            done = k
            break
        states[k + 1] = x
        margins[k + 1] = _margin_row(x, p)

    if diagnostic:
        status.extend(["IntegrationError"] * (n - len(status)))
    recorded = margins[: done + 1]
    hard = [i for i, cid in enumerate(MARGIN_IDS) if cid not in slacked]
    violated = tuple(MARGIN_IDS[i] for i in hard if np.min(recorded[:, i]) < -VIOLATION_TOL)
    passed = not violated and not diagnostic
    if diagnostic and not violated:
        violated = ("integration",)
    return EpisodeResult(
        times=np.arange(n + 1) * cfg.dt,
        states=states,
        u_des=u_des,
        u_act=u_act,
        margins=margins,
        slack=slack,
        qp_status=status,
        intervened=intervened,
        slacked=tuple(slacked),
        passed=passed,
        violated=violated,
        intervention_rate=float(np.mean(intervened)) if n else 0.0,
        wall_time=time.perf_counter() - start,
        seed=cfg.seed,
        diagnostic=diagnostic,
    )


# -- campaigns -------------------------------------------------------------------------

@dataclass
class EpisodeSummary:
    index: int
    seed: int
    passed: bool
    violated: tuple[str, ...]
    initial_state: list[float]
    intervention_rate: float


@dataclass
class CampaignSummary:
    n_episodes: int
    success_rate: float
    per_constraint_pct: dict[str, float]
    per_count_pct: dict[str, float]
    seeds: list[int]
    root_seed: int
    episodes: list[EpisodeSummary] = field(default_factory=list)
    tuning: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(not e.passed for e in self.episodes)


def summarize(episodes: Sequence[EpisodeSummary], root_seed: int, tuning: Tuning | None = None) -> CampaignSummary:
    episodes = sorted(episodes, key=lambda e: e.index)
    n = len(episodes)
    failed = [e for e in episodes if not e.passed]
    per_constraint: dict[str, float] = {}
    per_count: dict[str, float] = {}
    if failed:
        counts = Counter(cid for e in failed for cid in e.violated)
        per_constraint = {cid: 100.0 * counts[cid] / len(failed) for cid in sorted(counts)}
        buckets = Counter(min(len(e.violated), 4) for e in failed)
        labels = {1: "1", 2: "2", 3: "3", 4: "4+"}
        per_count = {labels[k]: 100.0 * buckets[k] / len(failed) for k in sorted(buckets)}
    return CampaignSummary(
        n_episodes=n,
        success_rate=(n - len(failed)) / n if n else 0.0,
        per_constraint_pct=per_constraint,
        per_count_pct=per_count,
        seeds=[e.seed for e in episodes],
        root_seed=root_seed,
        episodes=list(episodes),
        tuning=tuning.to_dict() if tuning is not None else {},
    )


def _campaign_task(args) -> EpisodeSummary:
    index, seed, template, p = args
    cfg = replace(template, seed=seed, initial_state=None)
    res = run_episode(cfg, p)
    return EpisodeSummary(index, seed, res.passed, res.violated,
                          [float(v) for v in res.states[0]], res.intervention_rate)


def run_campaign(n: int, ranges: SampleRanges | None, template: EpisodeConfig,
                 seed: int, p: SpacecraftParams, workers: int = 1,
                 progress=None) -> CampaignSummary:
    if n < 1:
        raise ValueError("campaign needs at least one episode")
    template = replace(template, ranges=ranges or template.ranges or SampleRanges.default(p),
                       initial_state=None, seed=0)
    tasks = [(i, episode_seed(seed, i), template, p) for i in range(n)]
    results: list[EpisodeSummary] = []
    if workers <= 1:
        for task in tasks:
            results.append(_campaign_task(task))
            if progress:
                progress(results[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_campaign_task, tasks):
                results.append(res)
                if progress:
                    progress(res)
    return summarize(results, seed, p.tuning)


# -- calibration ----------------------------------------------------------------------

# Ordered small -> large; the search prefers earlier entries.
GAIN_LADDER = ((0.01, 0.02), (0.02, 0.05), (0.05, 0.1), (0.1, 0.2), (0.2, 0.5), (0.5, 0.5), (1.0, 1.0))
DELTA_LADDERS = {
    "delta0": (0.0, 0.25, 0.5, 1.0, 2.0),
    "delta1": (0.0, 0.25, 0.5, 1.0),
    "delta2": (0.0, 100.0, 250.0, 500.0, 1000.0),
}
GAIN_GROUPS = {
    "angles": ("exclusion", "communication"),
    "temperature": ("temperature",),
    "battery": ("battery",),
    "rates": ("omega", "psi"),
}


@dataclass
class CalibrationResult:
    tuning: Tuning
    violations: int
    converged: bool
    evaluations: int
    history: list[tuple[str, int]] = field(default_factory=list)


def _with_coord(t: Tuning, name: str, value) -> Tuning:
    if name in DELTA_LADDERS:
        return replace(t, **{name: float(value)})
    gains = dict(t.gains)
    for fam in GAIN_GROUPS[name]:
        gains[fam] = tuple(value)
    return replace(t, gains=gains)


def _coord_value(t: Tuning, name: str):
    if name in DELTA_LADDERS:
        return getattr(t, name)
    return tuple(t.gains[GAIN_GROUPS[name][0]])


def _ladder(name: str):
    return DELTA_LADDERS.get(name, GAIN_LADDER)


def failing_seeds(tuning: Tuning, p: SpacecraftParams, seeds: Sequence[int],
                  template: EpisodeConfig | None = None, stop_at: int | None = None) -> list[int]:
    """Seeds whose zero-controller episode fails under ``tuning``."""
    pt = p.with_tuning(tuning)
    template = template or EpisodeConfig(seed=0)
    ranges = template.ranges or SampleRanges.default(pt)
    failed = []
    for s in seeds:
        res = run_episode(replace(template, seed=int(s), initial_state=None, ranges=ranges), pt)
        if not res.passed:
            failed.append(int(s))
            if stop_at is not None and len(failed) >= stop_at:
                break
    return failed


def count_violations(tuning: Tuning, p: SpacecraftParams, seeds: Sequence[int],
                     template: EpisodeConfig | None = None, stop_at: int | None = None) -> int:
    """Number of failed zero-controller episodes over ``seeds``."""
    return len(failing_seeds(tuning, p, seeds, template, stop_at))


def calibrate_tuning(p: SpacecraftParams, seed: int, n_episodes: int = 50, start: Tuning | None = None,
                     max_sweeps: int = 3, template: EpisodeConfig | None = None) -> CalibrationResult:
    """Coordinate search for the smallest tuning with zero violations.

    Phase one raises coordinates (one at a time, over fixed ladders) until
    the seeded zero-controller episodes all pass; phase two walks each
    coordinate back down while they keep passing. On failure the best
    tuning found is returned with its residual violation count.
    """
    seeds = [episode_seed(seed, i) for i in range(n_episodes)]
    coords = list(DELTA_LADDERS) + list(GAIN_GROUPS)
    best = start or p.tuning
    evals = 0
    history: list[tuple[str, int]] = []

    hard: list[int] = []  # seeds that failed before are tried first

    def score(t: Tuning, stop_at=None) -> int:
        nonlocal evals
        evals += 1
        order = hard + [s for s in seeds if s not in hard]
        failed = failing_seeds(t, p, order, template, stop_at)
        hard.extend(s for s in failed if s not in hard)
        history.append((repr(t.to_dict()), len(failed)))
        log.info("calibration eval %d: %d violations", evals, len(failed))
        return len(failed)

    best_v = score(best)
    for _ in range(max_sweeps):
        if best_v == 0:
            break
        for name in coords:
            for value in _ladder(name):
                if value == _coord_value(best, name):
                    continue
                cand = _with_coord(best, name, value)
                v = score(cand, stop_at=best_v)
                if v < best_v:
                    best, best_v = cand, v
            if best_v == 0:
                break

    if best_v == 0:
        for name in coords:
            ladder = _ladder(name)
            current = ladder.index(_coord_value(best, name)) if _coord_value(best, name) in ladder else len(ladder)
            for value in ladder[:current]:
                cand = _with_coord(best, name, value)
                if score(cand, stop_at=1) == 0:
                    best = cand
                    break
    return CalibrationResult(best, best_v, best_v == 0, evals, history)

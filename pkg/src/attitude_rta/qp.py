"""Dense strictly convex QP for the safety filter.

The filter problem is tiny (three wheel accelerations plus one column per
slacked barrier row) and is solved with the Goldfarb-Idnani dual active-set
method: start from the unconstrained minimizer and add the most violated
constraint until the point is primal feasible. Dual feasibility holds
throughout, so the final iterate carries its own KKT certificate and
infeasibility is detected without a phase-1 problem.

Problem::

    min  |u - u_des|^2 + sum_i p_i * delta_i^2
    s.t. a_i @ u + b_i >= delta_i     (delta_i == 0 for unslacked rows)
         lower <= u <= upper
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .barriers import BarrierRow, ControlBounds

FEAS_TOL = 1e-9
MAX_ITER = 200
_ZERO_STEP = 1e-14


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


@dataclass
class QpProblem:
    u_des: np.ndarray
    rows: Sequence[BarrierRow]
    box: ControlBounds
    slack_penalty: Sequence[float | None] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.u_des = np.asarray(self.u_des, dtype=float)
        if not self.slack_penalty:
            self.slack_penalty = [None] * len(self.rows)
        if len(self.slack_penalty) != len(self.rows):
            raise ValueError("slack_penalty needs one entry per row")
        for pen in self.slack_penalty:
            if pen is not None and not pen > 0.0:
                raise ValueError("slack penalties must be positive")

    @property
    def slacked(self) -> list[int]:
        return [i for i, pen in enumerate(self.slack_penalty) if pen is not None]

    def to_text(self) -> str:
        """Plain-text dump: one labelled matrix per block."""
        buf = io.StringIO()
        buf.write(f"u_des {' '.join(repr(float(v)) for v in self.u_des)}\n")
        buf.write(f"lower {' '.join(repr(float(v)) for v in self.box.lower)}\n")
        buf.write(f"upper {' '.join(repr(float(v)) for v in self.box.upper)}\n")
        buf.write(f"rows {len(self.rows)}\n")
        for row, pen in zip(self.rows, self.slack_penalty):
            a = " ".join(repr(float(v)) for v in row.a)
            buf.write(f"{row.constraint_id} {a} {row.b!r} {'-' if pen is None else repr(pen)}\n")
        return buf.getvalue()


@dataclass
class QpSolution:
    u: np.ndarray
    slacks: np.ndarray
    status: QpStatus
    iterations: int
    kkt_residual: float
    active_set: tuple[int, ...] = ()
    multipliers: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


class _Standard:
    """``min 0.5 z'Gz + c'z  s.t.  N'z >= d`` with unit-norm columns of ``N``."""

    def __init__(self, problem: QpProblem):
        rows = list(problem.rows)
        slacked = problem.slacked
        self.n_u = 3
        n = 3 + len(slacked)
        self.n = n
        hdiag = np.full(n, 2.0)
        for k, i in enumerate(slacked):
            hdiag[3 + k] = 2.0 * problem.slack_penalty[i]
        self.hdiag = hdiag
        self.c = np.zeros(n)
        self.c[:3] = -2.0 * problem.u_des
        slack_col = {i: 3 + k for k, i in enumerate(slacked)}

        cols, rhs = [], []
        for i, row in enumerate(rows):
            col = np.zeros(n)
            col[:3] = row.a
            if i in slack_col:
                col[slack_col[i]] = -1.0
            cols.append(col)
            rhs.append(-row.b)
        for j in range(3):
            col = np.zeros(n)
            col[j] = 1.0
            cols.append(col)
            rhs.append(problem.box.lower[j])
            col = np.zeros(n)
            col[j] = -1.0
            cols.append(col)
            rhs.append(-problem.box.upper[j])
        N = np.array(cols, dtype=float).T.reshape(n, len(cols))
        d = np.array(rhs, dtype=float)
        norms = np.linalg.norm(N, axis=0)
        self.zero_cols = norms == 0.0
        norms[self.zero_cols] = 1.0
        self.N = N / norms
        self.d = d / norms
        self.n_rows = len(rows)

    def slack(self, z: np.ndarray) -> np.ndarray:
        return self.N.T @ z - self.d


def _factor(std: _Standard, active: list[int]):
    """Return ``(J, R)`` with ``J' N_A = [R; 0]`` and ``J J' = G^-1``."""
    linv = 1.0 / np.sqrt(std.hdiag)
    if not active:
        return np.diag(linv), np.zeros((0, 0))
    m = std.N[:, active] * linv[:, None]
    qmat, rmat = np.linalg.qr(m, mode="complete")
    return linv[:, None] * qmat, rmat[: len(active), :]


def _equality_start(std: _Standard, active: list[int]):
    """Minimizer with ``active`` held as equalities, or None if not dual feasible."""
    if not active:
        return None
    ginv = 1.0 / std.hdiag
    na = std.N[:, active]
    lhs = na.T @ (ginv[:, None] * na)
    try:
        lam = np.linalg.solve(lhs, std.d[active] + na.T @ (ginv * std.c))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
        return None
    z = ginv * (na @ lam - std.c)
    return z, dict(zip(active, lam))


def solve(problem: QpProblem, warm_start: Sequence[int] | None = None) -> QpSolution:
    std = _Standard(problem)
    z = -std.c / std.hdiag
    active: list[int] = []
    lam: dict[int, float] = {}
    if warm_start:
        start = _equality_start(std, [i for i in warm_start if i < std.N.shape[1]])
        if start is not None:
            z, lam = start
            active = list(lam)

    iterations = 0
    status = QpStatus.OPTIMAL
    while True:
        s = std.slack(z)
        if active:
            s[active] = np.inf
        s[std.zero_cols & (std.d <= 0.0)] = np.inf
        p = int(np.argmin(s))
        if s[p] >= -FEAS_TOL:
            break
        if std.zero_cols[p]:
            status = QpStatus.INFEASIBLE
            break
        lam_p = 0.0
        n_p = std.N[:, p]
        added = False
        while not added:
            iterations += 1
            if iterations > MAX_ITER:
                status = QpStatus.MAX_ITERATIONS
                break
            jmat, rmat = _factor(std, active)
            dvec = jmat.T @ n_p
            q = len(active)
            step_dir = jmat[:, q:] @ dvec[q:]
            r = np.linalg.solve(rmat, dvec[:q]) if q else np.zeros(0)

            t1, k_drop = np.inf, -1
            for k in range(q):
                if r[k] > _ZERO_STEP:
                    ratio = lam[active[k]] / r[k]
                    if ratio < t1:
                        t1, k_drop = ratio, k
            curv = float(step_dir @ n_p)
            s_p = float(n_p @ z - std.d[p])
            t2 = -s_p / curv if curv > _ZERO_STEP else np.inf

            if not np.isfinite(t1) and not np.isfinite(t2):
                status = QpStatus.INFEASIBLE
                break
            t = min(t1, t2)
            for k in range(q):
                lam[active[k]] -= t * r[k]
            lam_p += t
            if np.isfinite(t2):
                z = z + t * step_dir
            if t2 <= t1:
                active.append(p)
                lam[p] = lam_p
                added = True
            else:
                dropped = active.pop(k_drop)
                lam.pop(dropped)
        if status is not QpStatus.OPTIMAL:
            break

    u = z[:3].copy()
    slacks = z[3:].copy()
    if status is not QpStatus.OPTIMAL:
        return QpSolution(u, slacks, status, iterations, np.inf, tuple(active))
    u = problem.box.clip(u)
    mult = np.zeros(std.N.shape[1])
    for i, v in lam.items():
        mult[i] = v
    resid = _residual(std, np.concatenate([u, slacks]), mult)
    return QpSolution(u, slacks, status, iterations, resid, tuple(sorted(active)), mult)


def _residual(std: _Standard, z: np.ndarray, mult: np.ndarray) -> float:
    grad = std.hdiag * z + std.c
    s = std.slack(z)
    stationarity = float(np.linalg.norm(grad - std.N @ mult))
    comp = float(np.max(np.abs(mult * s), initial=0.0))
    primal = float(max(0.0, -np.min(s, initial=0.0)))
    dual = float(max(0.0, -np.min(mult, initial=0.0)))
    scale = 1.0 + float(np.max(np.abs(mult), initial=0.0))
    return max(stationarity / scale, comp / scale, primal, dual)


def kkt_residual(problem: QpProblem, u, slacks=None, active_tol: float = 1e-7) -> float:
    """KKT violation of a candidate point.

    Multipliers are estimated by non-negative least squares over the
    constraints within ``active_tol`` of being tight. Stationarity and
    complementarity are reported relative to ``1 + max multiplier`` so that
    large slack penalties do not swamp the measure.
    """
    std = _Standard(problem)
    slacks = np.zeros(std.n - 3) if slacks is None else np.asarray(slacks, dtype=float)
    z = np.concatenate([np.asarray(u, dtype=float), slacks])
    if z.shape != (std.n,):
        raise ValueError("candidate has the wrong dimension")
    s = std.slack(z)
    near = np.flatnonzero(s <= active_tol)
    mult = np.zeros(std.N.shape[1])
    if near.size:
        grad = std.hdiag * z + std.c
        # rescale so the slack columns do not dominate the least-squares fit
        w = 1.0 / np.sqrt(std.hdiag)
        lam, _ = nnls(std.N[:, near] * w[:, None], grad * w)
        mult[near] = lam
    return _residual(std, z, mult)


def objective(problem: QpProblem, u, slacks=None) -> float:
    u = np.asarray(u, dtype=float)
    val = float(np.sum((problem.u_des - u) ** 2))
    if slacks is not None:
        pens = [problem.slack_penalty[i] for i in problem.slacked]
        val += float(np.sum(np.asarray(pens) * np.asarray(slacks) ** 2))
    return val


class QpSolver:
    """Solver with a remembered active set for warm starts across steps."""

    def __init__(self, warm_start: bool = True):
        self.warm_start = warm_start
        self._last: tuple[int, ...] = ()
        self._last_shape: tuple | None = None

    def solve(self, problem: QpProblem) -> QpSolution:
        shape = (tuple(r.constraint_id for r in problem.rows), tuple(problem.slacked))
        warm = self._last if (self.warm_start and shape == self._last_shape) else None
        sol = solve(problem, warm)
        if sol.optimal:
            self._last, self._last_shape = sol.active_set, shape
        else:
            self._last, self._last_shape = (), None
        return sol

"""Evaluation columns of a planning run and plain-text/CSV comparison tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import cheb
from .dynamics import QUAT
from .environment import Scenario, safety_radius
from .guess import GuessLevel
from .params import CRAZYFLIE, DEFAULT_WEIGHTS, CriterionWeights, UavParams
from .refine import Method, PlanResult
from .transcribe import Trajectory, boundary_states, criterion_integrand, hover_control

VIOLATION_SAMPLES = 1000
PERCENTILE_MIN_ROWS = 10

# columns compared across rows; all of them are better when smaller
SCORED_COLUMNS = ("iterations", "criterion", "absolute_error", "sum_violation",
                  "obstacle_violation", "total_time")


@dataclass(frozen=True)
class EvaluationRow:
    init_level: str
    constrained: bool
    method: str
    iterations: int
    criterion: float
    absolute_error: float
    sum_violation: float
    obstacle_violation: float
    total_time: float
    status: str = "Converged"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRow":
        kw = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if f.type == "bool" and isinstance(v, str):
                v = v.strip().lower() in ("1", "true", "yes")
            elif f.type == "int":
                v = int(v)
            elif f.type == "float":
                v = float(v)
            kw[f.name] = v
        return cls(**kw)

    @property
    def sort_key(self) -> tuple:
        return (int(GuessLevel.parse(self.init_level)),
                list(Method).index(Method.parse(self.method)),
                not self.constrained)


def criterion(traj: Trajectory, scenario: Scenario, params: UavParams = CRAZYFLIE,
              weights: CriterionWeights = DEFAULT_WEIGHTS) -> float:
    """Clenshaw-Curtis quadrature of the running cost over the collocation points."""
    _, x_goal = boundary_states(scenario)
    u_goal = hover_control(params)
    total = 0.0
    for g, sl in zip(traj.grids, traj.slices):
        vals = criterion_integrand(traj.X[sl], traj.U[sl], x_goal, u_goal, weights)
        total += cheb.quadrature(np.asarray(vals), g)
    return float(total)


def violations(traj: Trajectory, scenario: Scenario, params: UavParams = CRAZYFLIE,
               samples: int = VIOLATION_SAMPLES) -> tuple[float, float]:
    """``(sum over all constraints, obstacle part)`` of the positive violations at
    ``samples`` uniform times. Boxes and the quaternion norm count in their own
    units, obstacles as penetration depth into the inflated column in metres."""
    t = np.linspace(traj.t0, traj.tf, samples)
    X = traj.state(t)
    U = traj.control(t)
    xlo, xhi = scenario.limits.state_bounds()
    ulo, uhi = scenario.limits.control_bounds()
    with np.errstate(invalid="ignore"):
        box = (np.nansum(np.maximum(xlo - X, 0.0)) + np.nansum(np.maximum(X - xhi, 0.0))
               + np.nansum(np.maximum(ulo - U, 0.0)) + np.nansum(np.maximum(U - uhi, 0.0)))
    norm = np.abs(np.linalg.norm(X[:, QUAT], axis=1) - 1.0).sum()
    obstacle = 0.0
    if scenario.columns:
        centers = np.array([c.center for c in scenario.columns], float)
        radii = np.array([c.radius for c in scenario.columns]) + safety_radius(params)
        dist = np.linalg.norm(X[:, None, :2] - centers[None], axis=-1)
        obstacle = float(np.maximum(radii[None] - dist, 0.0).sum())
    return float(box + norm + obstacle), obstacle


def evaluate(result: PlanResult, scenario: Scenario, params: UavParams = CRAZYFLIE,
             weights: CriterionWeights = DEFAULT_WEIGHTS) -> EvaluationRow:
    """Evaluation row of one run; failed runs without a trajectory get NaN columns."""
    common = dict(init_level=result.level.label, constrained=bool(result.constrained),
                  method=result.method.value, iterations=result.iterations,
                  total_time=float(result.wall_time), status=result.status.value)
    if result.trajectory is None:
        nan = math.nan
        return EvaluationRow(criterion=nan, absolute_error=nan, sum_violation=nan,
                             obstacle_violation=nan, **common)
    total, obstacle = violations(result.trajectory, scenario, params)
    return EvaluationRow(
        criterion=criterion(result.trajectory, scenario, params, weights),
        absolute_error=result.report.max_absolute,
        sum_violation=total,
        obstacle_violation=obstacle,
        **common,
    )


# ---------------------------------------------------------------- tables


def order_rows(rows) -> list[EvaluationRow]:
    """Rows by (guess level, method, constrained first); equal keys keep their order."""
    return sorted(rows, key=lambda r: r.sort_key)


def column_markers(rows, column: str) -> list[str]:
    """Per-row markers for ``column``: ``best``/``worst`` (first occurrence wins a tie)
    and, with at least ten rows, ``p10``/``p90`` for values at or beyond those percentiles."""
    vals = np.array([getattr(r, column) for r in rows], float)
    marks = [[] for _ in rows]
    ok = np.flatnonzero(np.isfinite(vals))
    if ok.size == 0:
        return ["" for _ in rows]
    best = ok[np.argmin(vals[ok])]
    worst = ok[np.argmax(vals[ok])]
    marks[best].append("best")
    marks[worst].append("worst")
    if len(rows) >= PERCENTILE_MIN_ROWS:
        p10, p90 = np.percentile(vals[ok], [10, 90])
        for i in ok:
            if vals[i] <= p10 and i != best:
                marks[i].append("p10")
            if vals[i] >= p90 and i != worst:
                marks[i].append("p90")
    return [",".join(m) for m in marks]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.3e}"
    return str(v)


_HEADERS = ("init_level", "constrained", "method", "status") + SCORED_COLUMNS


def _table(rows):
    rows = order_rows(rows)
    if not rows:
        raise ValueError("need at least one row")
    marks = {c: column_markers(rows, c) for c in SCORED_COLUMNS}
    return rows, marks


def render_table(rows) -> str:
    """Aligned plain-text table; markers follow the value in brackets."""
    rows, marks = _table(rows)
    body = []
    for i, r in enumerate(rows):
        cells = []
        for h in _HEADERS:
            text = _fmt(getattr(r, h))
            if h in marks and marks[h][i]:
                text += f" [{marks[h][i]}]"
            cells.append(text)
        body.append(cells)
    widths = [max(len(h), *(len(b[j]) for b in body)) for j, h in enumerate(_HEADERS)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(_HEADERS, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"


def table_csv(rows, timing: bool = True) -> str:
    """CSV with one value column and one marker column per scored column.

    ``timing=False`` drops the wall-time column so the file is reproducible.
    """
    rows, marks = _table(rows)
    cols = [c for c in SCORED_COLUMNS if timing or c != "total_time"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(_HEADERS[:4])
    for c in cols:
        header += [c, f"{c}_mark"]
    w.writerow(header)
    for i, r in enumerate(rows):
        line = [r.init_level, r.constrained, r.method, r.status]
        for c in cols:
            line += [repr(getattr(r, c)), marks[c][i]]
        w.writerow(line)
    return buf.getvalue()

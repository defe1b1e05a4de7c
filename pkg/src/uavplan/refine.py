"""Discretization-error estimates and the iterative mesh-refinement planner.

The error of a collocation solution is measured between collocation points,
where the interpolating polynomials are free to disagree with the dynamics.
Single-segment refinement raises the polynomial degree; the multi-segment
scheme may also split a segment where the relative error jumps the most.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import cheb
from .dynamics import QUAT, STATE_DIM, rhs
from .environment import Scenario, safety_radius
from .guess import GuessLevel, build_guess, seed_timing
from .lazy_theta import GridPath
from .lazy_theta import plan as plan_path
from .params import CRAZYFLIE, DEFAULT_WEIGHTS, CriterionWeights, UavParams
from .solver import SolveOptions, SolveResult, SolveStatus, solve
from .transcribe import (DecisionLayout, Mesh, Trajectory, TranscriptionOptions, build_nlp,
                         extract_trajectory)

log = logging.getLogger(__name__)

SIMPSON_INTERVALS = 10
RELATIVE_FLOOR = 1e-6
ERROR_TOLERANCE = 1e-2
SPLIT_TOLERANCE = 1e-1
MIN_SPLIT_DURATION = 0.05
MIN_DEGREE_RAISE = 3


class Method(str, Enum):
    PSM = "PSM"
    PSEM = "PSEM"

    @classmethod
    def parse(cls, text) -> "Method":
        if isinstance(text, Method):
            return text
        try:
            return cls(str(text).upper())
        except ValueError:
            raise ValueError(f"unknown method {text!r}; choose PSM or PSEM") from None


class PlanStatus(str, Enum):
    CONVERGED = "Converged"
    ITERATION_LIMIT = "IterationLimit"
    TIME_LIMIT = "TimeLimit"
    FAILED = "Failed"


# ---------------------------------------------------------------- error estimates


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Errors per interpoint interval, in time order across the whole mesh.

    ``absolute_channels`` holds the integral of ``|eps_d|`` per interval and
    state channel; ``absolute`` is its maximum over channels. ``relative``
    is empty until :func:`relative_errors` fills it in.
    """

    edges: np.ndarray
    segment: np.ndarray
    absolute_channels: np.ndarray
    absolute: np.ndarray
    relative: np.ndarray
    mean_state: np.ndarray

    @property
    def max_absolute(self) -> float:
        return float(np.max(self.absolute, initial=0.0))

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative, initial=0.0))

    def segment_slice(self, s: int) -> slice:
        idx = np.flatnonzero(self.segment == s)
        return slice(int(idx[0]), int(idx[-1]) + 1) if idx.size else slice(0, 0)

    def per_segment(self) -> list[dict]:
        out = []
        for s in range(int(self.segment.max(initial=-1)) + 1):
            sl = self.segment_slice(s)
            out.append({
                "segment": s,
                "start": float(self.edges[sl.start, 0]),
                "end": float(self.edges[sl.stop - 1, 1]),
                "max_absolute": float(np.max(self.absolute[sl], initial=0.0)),
                "max_relative": float(np.max(self.relative[sl], initial=0.0)) if self.relative.size else 0.0,
            })
        return out

    def to_dict(self) -> dict:
        return {
            "max_absolute": self.max_absolute,
            "max_relative": self.max_relative,
            "intervals": int(self.absolute.size),
            "segments": self.per_segment(),
        }


def discretization_error(traj: Trajectory, params: UavParams = CRAZYFLIE, t=None) -> np.ndarray:
    """Derivative of the state polynomial minus the dynamics at ``t``.

    Returns a 13-vector for scalar ``t`` and an ``(n, 13)`` array otherwise.
    """
    t_arr = np.asarray(t, float)
    x = traj.state(t_arr)
    u = traj.control(t_arr)
    return traj.state_rate(t_arr) - rhs(x, u, params)


def _segment_error(traj: Trajectory, s: int, t, params: UavParams) -> np.ndarray:
    # evaluate on segment s itself, so interval edges shared by two segments use the right polynomial
    x = traj.segment_state(s, t)
    u = traj.segment_control(s, t)
    return traj.segment_state_rate(s, t) - rhs(x, u, params)


def simpson(values, h: float) -> np.ndarray:
    """Composite Simpson rule over equally spaced samples along axis 0."""
    v = np.asarray(values, float)
    n = v.shape[0] - 1
    if n < 2 or n % 2:
        raise ValueError("Simpson's rule needs an even number of subintervals")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (h / 3.0) * np.tensordot(w, v, axes=(0, 0))


def _interval_samples(traj: Trajectory):
    """Yield ``(segment, t_i, t_{i+1}, sample times)`` for every interpoint interval."""
    for s, g in enumerate(traj.grids):
        nodes = g.times
        for a, b in zip(nodes[:-1], nodes[1:]):
            yield s, a, b, np.linspace(a, b, SIMPSON_INTERVALS + 1)


def absolute_errors(traj: Trajectory, mesh: Mesh | None = None,
                    params: UavParams = CRAZYFLIE) -> ErrorReport:
    """Integral of ``|eps_d|`` over every interpoint interval (composite Simpson)."""
    if mesh is not None and mesh != traj.mesh:
        raise ValueError("trajectory does not cover the given mesh")
    edges, segs, chans, means = [], [], [], []
    for s, a, b, ts in _interval_samples(traj):
        err = np.abs(_segment_error(traj, s, ts, params))
        chans.append(simpson(err, (b - a) / SIMPSON_INTERVALS))
        means.append(traj.segment_state(s, ts).mean(axis=0))
        edges.append((a, b))
        segs.append(s)
    chans = np.array(chans).reshape(-1, STATE_DIM)
    return ErrorReport(
        edges=np.array(edges, float).reshape(-1, 2),
        segment=np.array(segs, int),
        absolute_channels=chans,
        absolute=chans.max(axis=1, initial=0.0),
        relative=np.zeros(0),
        mean_state=np.array(means).reshape(-1, STATE_DIM),
    )


def relative_errors(report: ErrorReport, traj: Trajectory | None = None,
                    floor: float = RELATIVE_FLOOR) -> ErrorReport:
    """Absolute error over the magnitude of the mean state sample, floored at ``floor``."""
    denom = np.maximum(floor, np.linalg.norm(report.mean_state, axis=1))
    return replace(report, relative=report.absolute / denom)


def error_report(traj: Trajectory, params: UavParams = CRAZYFLIE) -> ErrorReport:
    return relative_errors(absolute_errors(traj, params=params), traj)


# ---------------------------------------------------------------- refinement


def degree_increase(degree: int, max_error: float, tolerance: float) -> int:
    """Added collocation points: ``max(ceil(log_N(err / tol)), 3)``."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if max_error <= tolerance:
        raise ValueError("error already within tolerance; no refinement needed")
    ratio = math.log(max_error / tolerance) / math.log(degree)
    return max(math.ceil(ratio - 1e-12), MIN_DEGREE_RAISE)


def _raised(degree: int, max_error: float, tolerance: float) -> int:
    # a failed split on a segment already within tolerance still gets the minimum raise
    step = degree_increase(degree, max_error, tolerance) if max_error > tolerance else MIN_DEGREE_RAISE
    return min(degree + step, cheb.MAX_DEGREE)


def psm_refine(mesh: Mesh, report: ErrorReport, tolerance: float = ERROR_TOLERANCE) -> Mesh:
    """Raise the degree of a single-segment mesh."""
    if len(mesh) != 1:
        raise ValueError("single-segment refinement needs a single-segment mesh")
    degree = mesh.degrees[0]
    return Mesh.single(min(degree + degree_increase(degree, report.max_absolute, tolerance), cheb.MAX_DEGREE))


def split_location(relative: np.ndarray) -> int:
    """Index ``i`` maximising ``relative[i + 1] - relative[i]``; the split is at the
    shared edge of intervals ``i`` and ``i + 1``. Ties go to the earliest index."""
    r = np.asarray(relative, float)
    if r.size < 2:
        raise ValueError("need at least two intervals to split")
    return int(np.argmax(np.diff(r)))


def psem_refine(mesh: Mesh, report: ErrorReport, tolerance: float = ERROR_TOLERANCE,
                split_tolerance: float = SPLIT_TOLERANCE, duration: float = 1.0,
                min_duration: float = MIN_SPLIT_DURATION) -> Mesh:
    """Split segments with large relative error, raise the degree of the rest.

    ``duration`` is the flight time the normalised mesh is stretched over;
    splits that would leave a piece shorter than ``min_duration`` seconds
    become degree raises.
    """
    if tolerance <= 0 or split_tolerance <= 0:
        raise ValueError("tolerances must be positive")
    breaks = mesh.breaks
    t_edges = report.edges
    t0 = float(t_edges[0, 0])
    span = float(t_edges[-1, 1]) - t0
    new_breaks, new_degrees = [0.0], []
    for s, seg in enumerate(mesh.segments):
        sl = report.segment_slice(s)
        rel = report.relative[sl]
        e_abs = float(np.max(report.absolute[sl], initial=0.0))
        e_rel = float(np.max(rel, initial=0.0))
        cut = None
        if e_rel > split_tolerance and rel.size >= 2:
            i = split_location(rel)
            t_cut = float(t_edges[sl.start + i, 1])
            b_cut = (t_cut - t0) / span
            lo, hi = breaks[s], breaks[s + 1]
            if min(b_cut - lo, hi - b_cut) * duration >= min_duration:
                cut = b_cut
        if cut is not None:
            new_breaks += [cut, breaks[s + 1]]
            new_degrees += [seg.degree, seg.degree]
        elif e_abs > tolerance or e_rel > split_tolerance:
            degree = _raised(seg.degree, e_abs, tolerance)
            new_breaks.append(breaks[s + 1])
            new_degrees.append(degree)
        else:
            new_breaks.append(breaks[s + 1])
            new_degrees.append(seg.degree)
    if new_degrees == list(mesh.degrees):
        return mesh
    new_breaks[-1] = 1.0
    return Mesh.from_breaks(new_breaks, new_degrees)


def propagate_solution(traj: Trajectory, mesh: Mesh, lower=None, upper=None) -> np.ndarray:
    """Old polynomials sampled at the collocation times of ``mesh`` as a decision vector.

    Quaternions are renormalised; ``lower``/``upper`` (decision-vector bounds)
    are applied when given.
    """
    times = mesh.times(traj.t0, traj.tf)
    X = traj.state(times)
    U = traj.control(times)
    q = X[:, QUAT]
    norm = np.linalg.norm(q, axis=1, keepdims=True)
    X[:, QUAT] = np.where(norm > 0, q / np.where(norm > 0, norm, 1.0), [1.0, 0.0, 0.0, 0.0])
    z = DecisionLayout(mesh.total_points).pack(traj.t0, traj.tf, X, U)
    if lower is not None or upper is not None:
        z = np.clip(z, -np.inf if lower is None else lower, np.inf if upper is None else upper)
    return z


# ---------------------------------------------------------------- driver


@dataclass(frozen=True)
class PlanOptions:
    tolerance: float = ERROR_TOLERANCE
    split_tolerance: float = SPLIT_TOLERANCE
    max_iterations: int = 10
    wall_clock_budget: float = 900.0
    psm_degree: int = 30
    psem_degree: int = 10
    psem_min_segments: int = 2
    psem_default_segments: int = 4
    min_split_duration: float = MIN_SPLIT_DURATION
    initial_mesh: Mesh | None = None
    solver: SolveOptions = field(default_factory=SolveOptions)
    transcription: TranscriptionOptions = field(default_factory=TranscriptionOptions)
    weights: CriterionWeights = DEFAULT_WEIGHTS

    def __post_init__(self):
        for name in ("tolerance", "split_tolerance", "max_iterations", "wall_clock_budget",
                     "psm_degree", "psem_degree", "psem_min_segments", "psem_default_segments",
                     "min_split_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.max_iterations) != self.max_iterations:
            raise ValueError("max_iterations must be an integer")


@dataclass(eq=False)
class PlanResult:
    status: PlanStatus
    trajectory: Trajectory | None
    meshes: list[Mesh]
    report: ErrorReport | None
    solves: list[SolveResult]
    wall_time: float
    method: Method
    level: GuessLevel
    constrained: bool
    path: GridPath | None = None
    reports: list[ErrorReport] = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.meshes)

    @property
    def converged(self) -> bool:
        return self.status is PlanStatus.CONVERGED

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "method": self.method.value,
            "guess_level": self.level.label,
            "constrained": self.constrained,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "message": self.message,
            "final_error": None if self.report is None else self.report.to_dict(),
            "tf": None if self.trajectory is None else self.trajectory.tf,
            "meshes": [m.to_dict() for m in self.meshes],
            "solves": [r.summary() for r in self.solves],
            "errors": [r.to_dict() for r in self.reports],
        }


def find_path(scenario: Scenario, params: UavParams = CRAZYFLIE) -> GridPath | None:
    grid = scenario.planning_grid(safety_radius(params))
    return plan_path(grid, grid.cell_of(scenario.start), grid.cell_of(scenario.goal))


def initial_mesh(method: Method, scenario: Scenario, path: GridPath | None,
                 level: GuessLevel, opts: PlanOptions) -> Mesh:
    """PSM: one segment of ``psm_degree``. PSEM: one segment per path leg when
    the guess follows a path (at least ``psem_min_segments``), else
    ``psem_default_segments`` equal segments."""
    if opts.initial_mesh is not None:
        return opts.initial_mesh
    if method is Method.PSM:
        return Mesh.single(opts.psm_degree)
    if level == GuessLevel.SIMPLE or path is None:
        return Mesh.uniform(opts.psem_default_segments, opts.psem_degree)
    _, knots, tf = seed_timing(path, scenario)
    breaks = np.asarray(knots, float) / tf
    while len(breaks) - 1 < opts.psem_min_segments:
        # halve the longest leg
        i = int(np.argmax(np.diff(breaks)))
        breaks = np.insert(breaks, i + 1, 0.5 * (breaks[i] + breaks[i + 1]))
    breaks[0], breaks[-1] = 0.0, 1.0
    return Mesh.from_breaks(breaks, [opts.psem_degree] * (len(breaks) - 1))


def _refine(method: Method, mesh: Mesh, report: ErrorReport, traj: Trajectory, opts: PlanOptions) -> Mesh:
    if method is Method.PSM:
        return psm_refine(mesh, report, opts.tolerance)
    return psem_refine(mesh, report, opts.tolerance, opts.split_tolerance,
                       duration=traj.tf - traj.t0, min_duration=opts.min_split_duration)


def plan(scenario: Scenario, params: UavParams = CRAZYFLIE, method="PSM", level="Position",
         constrained: bool = True, options: PlanOptions = PlanOptions()) -> PlanResult:
    """Guess, solve, estimate the error and refine until the error is small enough."""
    method = Method.parse(method)
    level = GuessLevel.parse(level)
    start = time.perf_counter()
    path = find_path(scenario, params)
    out = PlanResult(PlanStatus.FAILED, None, [], None, [], 0.0, method, level, constrained, path)

    def finish(status, msg=""):
        out.status = status
        out.message = msg
        out.wall_time = time.perf_counter() - start
        return out

    if path is None and level != GuessLevel.SIMPLE:
        return finish(PlanStatus.FAILED, "no grid path between start and goal")
    mesh = initial_mesh(method, scenario, path, level, options)
    guess = build_guess(scenario, mesh, level, path, constrained=constrained, params=params)
    z0 = guess.to_decision()
    best = None
    while True:
        remaining = options.wall_clock_budget - (time.perf_counter() - start)
        if remaining <= 0:
            return finish(PlanStatus.TIME_LIMIT, "wall-clock budget exhausted")
        nlp = build_nlp(scenario, params, mesh, options.weights, options.transcription)
        if len(out.meshes):
            z0 = np.clip(z0, nlp.lower, nlp.upper)
        solver_opts = replace(options.solver,
                              wall_clock_budget=min(options.solver.wall_clock_budget, remaining))
        res = solve(nlp, z0, solver_opts)
        out.meshes.append(mesh)
        out.solves.append(res)
        log.info("%s iteration %d: %d points, solver %s, viol %.2e, %.1fs", method.value,
                 len(out.meshes), mesh.total_points, res.status.value,
                 res.max_constraint_violation, res.wall_time)
        if res.status is SolveStatus.NUMERICAL_FAILURE:
            if best is None:
                return finish(PlanStatus.FAILED, f"solver failed on the first iteration: {res.message}")
            out.trajectory, out.report = best
            return finish(PlanStatus.FAILED, f"solver failed at iteration {len(out.meshes)}; "
                                             "returning the best earlier iterate")
        traj = extract_trajectory(res.point, mesh, nlp.layout)
        report = error_report(traj, params)
        out.reports.append(report)
        if best is None or report.max_absolute <= best[1].max_absolute:
            best = (traj, report)
        out.trajectory, out.report = traj, report
        if report.max_absolute <= options.tolerance:
            return finish(PlanStatus.CONVERGED)
        if len(out.meshes) >= options.max_iterations:
            return finish(PlanStatus.ITERATION_LIMIT, "iteration budget exhausted")
        if time.perf_counter() - start >= options.wall_clock_budget:
            return finish(PlanStatus.TIME_LIMIT, "wall-clock budget exhausted")
        new_mesh = _refine(method, mesh, report, traj, options)
        if new_mesh == mesh:
            return finish(PlanStatus.ITERATION_LIMIT, "mesh cannot be refined further")
        z0 = propagate_solution(traj, new_mesh)
        mesh = new_mesh

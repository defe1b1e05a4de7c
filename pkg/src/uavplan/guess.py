"""Hierarchical initial guesses seeded from an any-angle grid path.

Each level adds one layer of model knowledge on top of the previous one:
position spline, its derivative, the attitude that aligns body z with the
required force, body rates from the attitude history and finally thrust and
torque from the translational and rotational dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import CONTROL_DIM, STATE_DIM, UavControl, UavState, quat_conjugate, quat_multiply
from .environment import Scenario
from .lazy_theta import GridPath
from .params import CRAZYFLIE, UavParams
from .transcribe import DecisionLayout, Mesh, boundary_states, hover_control

E_Z = np.array([0.0, 0.0, 1.0])


class GuessLevel(IntEnum):
    SIMPLE = 0
    POSITION = 1
    VELOCITY = 2
    ORIENTATION = 3
    ANGULAR_RATE = 4
    ANGULAR_RATE_CONTROL = 5

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text) -> "GuessLevel":
        if isinstance(text, GuessLevel):
            return text
        key = str(text).replace("_", "").replace("-", "").lower()
        for lvl, name in _LABELS.items():
            if name.lower() == key:
                return lvl
        raise ValueError(f"unknown guess level {text!r}; choose from {', '.join(_LABELS.values())}")


_LABELS = {
    GuessLevel.SIMPLE: "Simple",
    GuessLevel.POSITION: "Position",
    GuessLevel.VELOCITY: "Velocity",
    GuessLevel.ORIENTATION: "Orientation",
    GuessLevel.ANGULAR_RATE: "AngularRate",
    GuessLevel.ANGULAR_RATE_CONTROL: "AngularRateControl",
}


@dataclass(frozen=True, eq=False)
class InitialGuess:
    mesh: Mesh
    t0: float
    tf: float
    X: np.ndarray
    U: np.ndarray
    level: GuessLevel
    constrained: bool = False

    def __post_init__(self):
        P = self.mesh.total_points
        if np.shape(self.X) != (P, STATE_DIM) or np.shape(self.U) != (P, CONTROL_DIM):
            raise ValueError("guess arrays do not match the mesh point count")

    @property
    def times(self) -> np.ndarray:
        return self.mesh.times(self.t0, self.tf)

    @property
    def states(self) -> list[UavState]:
        return [UavState.from_array(x) for x in self.X]

    @property
    def controls(self) -> list[UavControl]:
        return [UavControl.from_array(np.maximum(u, [0, -np.inf, -np.inf, -np.inf])) for u in self.U]

    def to_decision(self) -> np.ndarray:
        return DecisionLayout(self.mesh.total_points).pack(self.t0, self.tf, self.X, self.U)


# ---------------------------------------------------------------- timing


def _waypoint_array(path) -> np.ndarray:
    pts = path.as_array() if isinstance(path, GridPath) else np.asarray(path, float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("path needs at least two waypoints")
    return pts


def time_parameterize(path, v_max) -> tuple[list[float], float]:
    """Leg durations at the per-axis speed limit; zero-length legs get 0 s.

    Only the axes present in the waypoints are considered (xy for a grid path).
    """
    pts = _waypoint_array(path)
    v = np.asarray(v_max, float)[: pts.shape[1]]
    if np.any(v <= 0):
        raise ValueError("v_max must be positive on every axis")
    legs = np.abs(np.diff(pts, axis=0))
    durations = (legs / v).max(axis=1)
    if not np.any(durations > 0):
        raise ValueError("path has zero length")
    return [float(d) for d in durations], float(np.sum(durations))


def interpolate_z(t, t0, tf, z0, zf):
    if tf == t0:
        raise ValueError("tf must differ from t0")
    return z0 + (np.asarray(t, float) - t0) / (tf - t0) * (zf - z0)


def _seed_waypoints(path, scenario: Scenario, durations) -> tuple[np.ndarray, np.ndarray]:
    """3-D knots: the path's xy with exact start/goal ends, z linear in time."""
    pts = _waypoint_array(path)[:, :2].copy()
    pts[0] = scenario.start[:2]
    pts[-1] = scenario.goal[:2]
    knots = np.concatenate([[0.0], np.cumsum(durations)])
    keep = np.concatenate([[True], np.asarray(durations) > 0])
    pts, knots = pts[keep], knots[keep]
    z = interpolate_z(knots, knots[0], knots[-1], scenario.start[2], scenario.goal[2])
    return np.column_stack([pts, z]), knots


# ---------------------------------------------------------------- construction steps


def _linear(times, t0, tf, a, b) -> np.ndarray:
    s = ((np.asarray(times) - t0) / (tf - t0))[:, None]
    return (1 - s) * a[None, :] + s * b[None, :]


def build_simple(scenario: Scenario, params: UavParams, mesh: Mesh) -> InitialGuess:
    """Straight interpolation of the boundary states and controls over the mid flight time."""
    tf = 0.5 * (params.max_flight_time + 0.0)
    times = mesh.times(0.0, tf)
    xs, xg = boundary_states(scenario)
    u = hover_control(params)
    return InitialGuess(mesh, 0.0, tf, _linear(times, 0.0, tf, xs, xg),
                        _linear(times, 0.0, tf, u, u), GuessLevel.SIMPLE)


def build_position(waypoints, knot_times) -> CubicSpline:
    """Clamped cubic spline through the waypoints (zero end velocity)."""
    knots = np.asarray(knot_times, float)
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knot times must be strictly increasing")
    return CubicSpline(knots, np.asarray(waypoints, float), bc_type="clamped", axis=0)


def build_velocity(spline: CubicSpline, times) -> np.ndarray:
    return spline(np.asarray(times, float), 1)


def expected_force(accel, params: UavParams = CRAZYFLIE) -> np.ndarray:
    """Force the rotors must supply in the local frame: ``m (a + g e_z)``."""
    return params.mass * (np.asarray(accel, float) + params.g * E_Z)


def build_orientation(force) -> np.ndarray:
    """Minimal rotation taking body z onto each force direction.

    A zero or antiparallel force keeps the previous sample (identity first).
    """
    F = np.atleast_2d(np.asarray(force, float))
    out = np.empty((F.shape[0], 4))
    prev = np.array([1.0, 0.0, 0.0, 0.0])
    for k, f in enumerate(F):
        n = np.linalg.norm(f)
        if n > 0:
            b = f / n
            c = 1.0 + b[2]
            if c > 1e-12:
                q = np.array([c, -b[1], b[0], 0.0]) / np.sqrt(2.0 * c)
                prev = q / np.linalg.norm(q)
        out[k] = prev
    return out


def _hemisphere_continuous(q) -> np.ndarray:
    q = np.array(q, float)
    for k in range(1, len(q)):
        if q[k] @ q[k - 1] < 0:
            q[k] = -q[k]
    return q


def _gamma(q) -> np.ndarray:
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([-qx, qw, qz, -qy], -1),
        np.stack([-qy, -qz, qw, qx], -1),
        np.stack([-qz, qy, -qx, qw], -1),
    ], -2)


def _time_derivative(values, times) -> np.ndarray:
    """Central differences on a nonuniform grid; repeated times share one sample."""
    t = np.asarray(times, float)
    uniq, first, inv = np.unique(t, return_index=True, return_inverse=True)
    vals = np.asarray(values, float)[first]
    if uniq.size < 2:
        return np.zeros_like(np.asarray(values, float))
    edge = 2 if uniq.size > 2 else 1
    return np.gradient(vals, uniq, axis=0, edge_order=edge)[inv]


def build_angular_rate(quats, times) -> np.ndarray:
    """Body rates ``2 Gamma(q) q_dot`` from the sampled attitude history."""
    q = _hemisphere_continuous(quats)
    qdot = _time_derivative(q, times)
    return 2.0 * np.einsum("kij,kj->ki", _gamma(q), qdot)


def build_thrust(quats, force) -> np.ndarray:
    """Body-z component of the expected force, ``q* (x) F (x) q``."""
    q = np.atleast_2d(np.asarray(quats, float))
    F = np.atleast_2d(np.asarray(force, float))
    fq = np.concatenate([np.zeros((F.shape[0], 1)), F], axis=1)
    return quat_multiply(quat_multiply(quat_conjugate(q), fq), q)[:, 3]


def build_torque(omega, times, params: UavParams = CRAZYFLIE) -> np.ndarray:
    """Torque from the rotational dynamics: ``I w_dot + w x (I w)``."""
    w = np.atleast_2d(np.asarray(omega, float))
    inertia = np.asarray(params.inertia_diag)
    wdot = _time_derivative(w, times)
    return inertia * wdot + np.cross(w, inertia * w)


def clamp_to_constraints(guess: InitialGuess, scenario: Scenario,
                         params: UavParams = CRAZYFLIE) -> InitialGuess:
    """Clip into the state/control boxes and impose the boundary states and controls."""
    xlo, xhi = scenario.limits.state_bounds()
    ulo, uhi = scenario.limits.control_bounds()
    X = np.clip(guess.X, xlo, xhi)
    U = np.clip(guess.U, ulo, uhi)
    xs, xg = boundary_states(scenario)
    u = hover_control(params)
    X[0], X[-1] = xs, xg
    U[0], U[-1] = u, u
    return replace(guess, X=X, U=U, constrained=True)


# ---------------------------------------------------------------- driver


def seed_timing(path, scenario: Scenario) -> tuple[np.ndarray, np.ndarray, float]:
    """Waypoints, knot times and flight time used by every path-seeded level."""
    durations, _ = time_parameterize(path, scenario.limits.velocity_max)
    pts, knots = _seed_waypoints(path, scenario, durations)
    return pts, knots, float(knots[-1])


def build_guess(scenario: Scenario, mesh: Mesh, level, path=None, constrained: bool = False,
                params: UavParams = CRAZYFLIE) -> InitialGuess:
    """Initial guess of ``level`` on ``mesh``; levels above Simple need ``path``."""
    level = GuessLevel.parse(level)
    if level == GuessLevel.SIMPLE:
        guess = build_simple(scenario, params, mesh)
        return clamp_to_constraints(guess, scenario, params) if constrained else guess
    if path is None:
        raise ValueError(f"guess level {level.label} needs a path")
    pts, knots, tf = seed_timing(path, scenario)
    times = mesh.times(0.0, tf)
    xs, xg = boundary_states(scenario)
    u_h = hover_control(params)
    X = _linear(times, 0.0, tf, xs, xg)
    U = _linear(times, 0.0, tf, u_h, u_h)

    spline = build_position(pts, knots)
    X[:, 0:3] = spline(times)
    if level >= GuessLevel.VELOCITY:
        X[:, 3:6] = build_velocity(spline, times)
    if level >= GuessLevel.ORIENTATION:
        force = expected_force(spline(times, 2), params)
        X[:, 6:10] = build_orientation(force)
    if level >= GuessLevel.ANGULAR_RATE:
        X[:, 10:13] = build_angular_rate(X[:, 6:10], times)
    if level >= GuessLevel.ANGULAR_RATE_CONTROL:
        U[:, 0] = build_thrust(X[:, 6:10], force)
        U[:, 1:4] = build_torque(X[:, 10:13], times, params)
    guess = InitialGuess(mesh, 0.0, tf, X, U, level)
    return clamp_to_constraints(guess, scenario, params) if constrained else guess

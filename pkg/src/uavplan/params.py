"""Vehicle parameters, box limits and criterion weights for the Crazyflie 2.1."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

_KD_SHAPE = (
    (10.2506, 0.3177, 0.4332),
    (0.3177, 10.2506, 0.4332),
    (7.7050, 7.7050, 7.5530),
)


@dataclass(frozen=True)
class UavParams:
    """Physical model parameters (SI units)."""

    g: float = 9.81305
    mass: float = 0.032
    arm_length: float = 0.0397
    inertia_diag: tuple[float, float, float] = (6.410179e-6, 6.410179e-6, 9.860228e-6)
    prop_diameter: float = 0.051
    max_flight_time: float = 180.0
    drag_matrix: tuple[tuple[float, ...], ...] = tuple(
        tuple(-1e-7 * v for v in row) for row in _KD_SHAPE
    )

    def __post_init__(self):
        for name in ("g", "mass", "max_flight_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.arm_length < 0 or self.prop_diameter < 0:
            raise ValueError("lengths must be non-negative")
        if len(self.inertia_diag) != 3 or min(self.inertia_diag) <= 0:
            raise ValueError("inertia_diag needs three positive entries")
        if np.shape(self.drag_matrix) != (3, 3):
            raise ValueError("drag_matrix must be 3x3")

    @property
    def inertia(self) -> np.ndarray:
        return np.diag(self.inertia_diag)

    @property
    def kd(self) -> np.ndarray:
        return np.array(self.drag_matrix, dtype=float)

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.g

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "UavParams":
        kw = dict(data)
        if "inertia_diag" in kw:
            kw["inertia_diag"] = tuple(float(v) for v in kw["inertia_diag"])
        if "drag_matrix" in kw:
            kw["drag_matrix"] = tuple(tuple(float(v) for v in row) for row in kw["drag_matrix"])
        return cls(**kw)


@dataclass(frozen=True)
class Limits:
    """State/control boxes. Angular rate is unbounded."""

    position_lower: tuple[float, float, float] = (-2.0, -2.0, 0.0)
    position_upper: tuple[float, float, float] = (2.0, 2.0, 2.0)
    velocity_max: tuple[float, float, float] = (2.0, 2.0, 2.0)
    thrust_min: float = 0.0
    thrust_max: float = 0.6
    torque_max: tuple[float, float, float] = (5.955e-3, 5.955e-3, 1.82063e-3)

    def state_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([
            self.position_lower,
            -np.asarray(self.velocity_max),
            [0.0, -1.0, -1.0, -1.0],
            [-np.inf] * 3,
        ])
        hi = np.concatenate([
            self.position_upper,
            self.velocity_max,
            [1.0, 1.0, 1.0, 1.0],
            [np.inf] * 3,
        ])
        return lo, hi

    def control_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        tau = np.asarray(self.torque_max)
        return (np.concatenate([[self.thrust_min], -tau]),
                np.concatenate([[self.thrust_max], tau]))

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "Limits":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass(frozen=True)
class CriterionWeights:
    """Weights of the running cost: state (without quaternion), quaternion, control."""

    q_state: tuple[float, ...] = (1, 1, 1, 1, 1, 1, 0.328, 0.328, 0.328)
    q_quat: float = 100.0
    r_control: tuple[float, ...] = (1.223e1, 2.820e4, 2.820e4, 3.017e5)
    # >0 replaces |1 - q.qf| by sqrt((1 - q.qf)^2 + eps^2) - eps
    quat_smoothing: float = 0.0

    def __post_init__(self):
        if len(self.q_state) != 9 or len(self.r_control) != 4:
            raise ValueError("q_state needs 9 entries and r_control 4")
        if min(self.q_state) < 0 or self.q_quat < 0 or min(self.r_control) < 0:
            raise ValueError("weights must be non-negative")

    def scaled(self, factor: float) -> "CriterionWeights":
        return CriterionWeights(
            tuple(factor * v for v in self.q_state),
            factor * self.q_quat,
            tuple(factor * v for v in self.r_control),
            self.quat_smoothing,
        )

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "CriterionWeights":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


CRAZYFLIE = UavParams()
DEFAULT_LIMITS = Limits()
DEFAULT_WEIGHTS = CriterionWeights()

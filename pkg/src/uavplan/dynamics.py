"""Quadrotor rigid-body model with quaternion attitude and lumped thrust-scaled drag.

Quaternions are Hamilton, scalar first ``(w, x, y, z)`` and rotate body
vectors into the local frame: ``v_L = q (x) v_B (x) q*``. Angular rate is
expressed in the body frame.

State layout (13): position r_L, velocity v_L, quaternion q, body rate omega.
Control layout (4): collective thrust along body z, body torque.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import CRAZYFLIE, UavParams

STATE_DIM = 13
CONTROL_DIM = 4
POS = slice(0, 3)
VEL = slice(3, 6)
QUAT = slice(6, 10)
RATE = slice(10, 13)

STATE_NAMES = ("x", "y", "z", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz")
CONTROL_NAMES = ("thrust_z", "tau_x", "tau_y", "tau_z")

UNIT_TOL = 1e-6
IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class UavState:
    r_L: np.ndarray
    v_L: np.ndarray
    q: np.ndarray
    omega: np.ndarray

    @classmethod
    def from_array(cls, x) -> "UavState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have shape (13,), got {x.shape}")
        return cls(x[POS].copy(), x[VEL].copy(), x[QUAT].copy(), x[RATE].copy())

    @classmethod
    def hover(cls, position) -> "UavState":
        return cls(np.asarray(position, float), np.zeros(3), IDENTITY_QUAT.copy(), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.r_L, self.v_L, self.q, self.omega]).astype(float)

    def without_quaternion(self) -> np.ndarray:
        return np.concatenate([self.r_L, self.v_L, self.omega]).astype(float)

    def is_valid(self, tol: float = 1e-9) -> bool:
        return abs(np.linalg.norm(self.q) - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class UavControl:
    thrust_z: float
    torque: np.ndarray

    def __post_init__(self):
        if self.thrust_z < 0:
            raise ValueError("thrust_z must be non-negative")

    @classmethod
    def from_array(cls, u) -> "UavControl":
        u = np.asarray(u, dtype=float)
        if u.shape != (CONTROL_DIM,):
            raise ValueError(f"control vector must have shape (4,), got {u.shape}")
        return cls(float(u[0]), u[1:].copy())

    @classmethod
    def hover(cls, params: UavParams = CRAZYFLIE) -> "UavControl":
        return cls(params.hover_thrust, np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.thrust_z], self.torque]).astype(float)


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a (x) b``; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def _require_unit(q, tol=UNIT_TOL):
    n = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(n - 1.0) > tol):
        raise ValueError(f"quaternion is not unit (|q| = {np.max(n)!r}, tol {tol})")


def rotation_matrix(q, xp=np):
    """Matrix of ``v -> q (x) v (x) q*`` (body to local for a unit ``q``).

    Written in the homogeneous quadratic form so it equals the quaternion
    sandwich for any ``q``. Returns nested rows so it also works under jax.
    """
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ww, xx, yy, zz = qw * qw, qx * qx, qy * qy, qz * qz
    return (
        (ww + xx - yy - zz, 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy)),
        (2 * (qx * qy + qw * qz), ww - xx + yy - zz, 2 * (qy * qz - qw * qx)),
        (2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), ww - xx - yy + zz),
    )


def rotate_body_to_local(q, v_B) -> np.ndarray:
    """``q (x) (0, v_B) (x) q*`` for a unit quaternion."""
    q = np.asarray(q, dtype=float)
    _require_unit(q)
    v = np.concatenate([np.zeros(np.shape(v_B)[:-1] + (1,)), np.asarray(v_B, float)], axis=-1)
    return quat_multiply(quat_multiply(q, v), quat_conjugate(q))[..., 1:]


def rotate_local_to_body(q, v_L) -> np.ndarray:
    """``q* (x) (0, v_L) (x) q`` for a unit quaternion."""
    q = np.asarray(q, dtype=float)
    _require_unit(q)
    v = np.concatenate([np.zeros(np.shape(v_L)[:-1] + (1,)), np.asarray(v_L, float)], axis=-1)
    return quat_multiply(quat_multiply(quat_conjugate(q), v), q)[..., 1:]


def gamma_matrix(q) -> np.ndarray:
    """3x4 quaternion rate matrix with ``q_dot = 0.5 * Gamma(q).T @ omega``."""
    qw, qx, qy, qz = np.asarray(q, dtype=float)
    return np.array([
        [-qx, qw, qz, -qy],
        [-qy, -qz, qw, qx],
        [-qz, qy, -qx, qw],
    ])


def aero_force_body(q, v_L, thrust_z: float, params: UavParams = CRAZYFLIE) -> np.ndarray:
    """Lumped drag in the body frame: ``-thrust_z * K_D @ v_B``."""
    v_B = rotate_local_to_body(q, v_L)
    return -float(thrust_z) * (params.kd @ v_B)


def rhs(X, U, params: UavParams = CRAZYFLIE, xp=np):
    """Batched state derivative, ``(..., 13), (..., 4) -> (..., 13)``.

    No input validation and no quaternion normalisation; pass ``xp=jax.numpy``
    to trace it.
    """
    v = X[..., 3:6]
    q = X[..., 6:10]
    w = X[..., 10:13]
    T = U[..., 0]
    tau = U[..., 1:4]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    C = rotation_matrix(q, xp)
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # body velocity = C^T v
    vb = [C[0][i] * vx + C[1][i] * vy + C[2][i] * vz for i in range(3)]
    kd = params.kd
    fb = [-T * (kd[i, 0] * vb[0] + kd[i, 1] * vb[1] + kd[i, 2] * vb[2]) for i in range(3)]
    fb[2] = fb[2] + T
    inv_m = 1.0 / params.mass
    acc = [inv_m * (C[i][0] * fb[0] + C[i][1] * fb[1] + C[i][2] * fb[2]) for i in range(3)]
    acc[2] = acc[2] - params.g

    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    qdot = [
        0.5 * (-qx * wx - qy * wy - qz * wz),
        0.5 * (qw * wx - qz * wy + qy * wz),
        0.5 * (qz * wx + qw * wy - qx * wz),
        0.5 * (-qy * wx + qx * wy + qw * wz),
    ]
    Ix, Iy, Iz = params.inertia_diag
    wdot = [
        (tau[..., 0] - (Iz - Iy) * wy * wz) / Ix,
        (tau[..., 1] - (Ix - Iz) * wz * wx) / Iy,
        (tau[..., 2] - (Iy - Ix) * wx * wy) / Iz,
    ]
    return xp.stack([vx, vy, vz, *acc, *qdot, *wdot], axis=-1)


def state_derivative(x, u, params: UavParams = CRAZYFLIE) -> np.ndarray:
    """Time derivative (r_dot, v_dot, q_dot, omega_dot) of a single state.

    ``x``/``u`` may be :class:`UavState`/:class:`UavControl` or flat arrays.
    Rejects quaternions further than 1e-6 from unit norm.
    """
    xa = x.as_array() if isinstance(x, UavState) else np.asarray(x, dtype=float)
    ua = u.as_array() if isinstance(u, UavControl) else np.asarray(u, dtype=float)
    if xa.shape != (STATE_DIM,) or ua.shape != (CONTROL_DIM,):
        raise ValueError("expected a 13-state and a 4-control")
    _require_unit(xa[QUAT])
    return np.asarray(rhs(xa, ua, params))

"""Chebyshev-Gauss-Lobatto collocation: nodes, weights, differentiation, interpolation.

Nodes are stored in ascending order, ``points[k] = cos((N - k) pi / N)``, so
``points[0] == -1`` and ``points[N] == 1``. Every array handed out by this
module is read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 256


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _check_degree(N: int) -> int:
    if int(N) != N:
        raise ValueError(f"degree must be an integer, got {N!r}")
    N = int(N)
    if N < 1:
        raise ValueError("degree must be >= 1 (N = 0 is a degenerate grid)")
    if N > MAX_DEGREE:
        raise ValueError(f"degree {N} exceeds the per-segment cap {MAX_DEGREE}; split the segment")
    return N


def cgl_points(N: int) -> np.ndarray:
    """Ascending Chebyshev-Gauss-Lobatto points on [-1, 1].

    The sine form keeps the set exactly symmetric and puts an exact zero in
    the middle for even ``N``.
    """
    N = _check_degree(N)
    k = np.arange(N + 1)
    x = np.sin(np.pi * (2 * k - N) / (2 * N))
    x[0], x[-1] = -1.0, 1.0
    return x


def cc_weights(N: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the CGL points (explicit cosine sums)."""
    N = _check_degree(N)
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    inner = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(N * theta[inner]) / (N * N - 1)
    else:
        w[0] = w[N] = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / N
    # weights are symmetric, so the descending-theta order needs no flip
    return w


def cgl_barycentric_weights(N: int) -> np.ndarray:
    """Closed-form barycentric weights for CGL nodes: (-1)^k, halved at the ends."""
    N = _check_degree(N)
    w = (-1.0) ** np.arange(N + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def barycentric_weights(points) -> np.ndarray:
    """Barycentric weights for arbitrary distinct nodes, normalised to max |w| = 1."""
    x = np.asarray(points, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("points must be distinct")
    # capacity scaling keeps the products in range for large node counts
    span = x.max() - x.min()
    scale = 4.0 / span if span > 0 else 1.0
    diff *= scale
    logs = np.log(np.abs(diff)).sum(axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    w = sign * np.exp(-(logs - logs.min()))
    return w / np.abs(w).max()


def diff_matrix(points, bary_weights=None) -> np.ndarray:
    """Differentiation matrix of the interpolating polynomial on ``points``.

    Off-diagonal entries use the barycentric form; the diagonal is set by the
    negative-sum trick so each row annihilates constants to round-off.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need at least two points")
    if np.any(np.diff(x) <= 0):
        if np.unique(x).size != x.size:
            raise ValueError("repeated points are not allowed")
        raise ValueError("points must be ascending")
    w = barycentric_weights(x) if bary_weights is None else np.asarray(bary_weights, float)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    D[np.diag_indices_from(D)] = -D.sum(axis=1)
    return D


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    degree: int
    points: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray
    bary_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.degree + 1


@lru_cache(maxsize=None)
def collocation_grid(N: int) -> CollocationGrid:
    """Cached CGL grid of degree ``N`` (N+1 points)."""
    N = _check_degree(N)
    x = cgl_points(N)
    bw = cgl_barycentric_weights(N)
    return CollocationGrid(
        degree=N,
        points=_readonly(x),
        weights=_readonly(cc_weights(N)),
        diff_matrix=_readonly(diff_matrix(x, bw)),
        bary_weights=_readonly(bw),
    )


@dataclass(frozen=True, eq=False)
class ScaledGrid:
    base: CollocationGrid
    t0: float
    tf: float
    times: np.ndarray
    scaled_weights: np.ndarray
    scaled_diff: np.ndarray

    @property
    def size(self) -> int:
        return self.base.size


def scale_grid(grid: CollocationGrid, t0: float, tf: float) -> ScaledGrid:
    """Map a reference grid affinely onto ``[t0, tf]``."""
    t0, tf = float(t0), float(tf)
    if not tf > t0:
        raise ValueError(f"need tf > t0, got t0={t0}, tf={tf}")
    half = 0.5 * (tf - t0)
    times = t0 + (grid.points + 1.0) * half
    times[0], times[-1] = t0, tf
    return ScaledGrid(
        base=grid,
        t0=t0,
        tf=tf,
        times=_readonly(times),
        scaled_weights=_readonly(grid.weights * half),
        scaled_diff=_readonly(grid.diff_matrix / half),
    )


def _domain_tol(grid: ScaledGrid) -> float:
    return 1e-12 * max(1.0, abs(grid.t0), abs(grid.tf))


def interpolate(values, grid: ScaledGrid, t):
    """Evaluate the degree-N interpolant through ``values`` at time(s) ``t``.

    ``values`` may be ``(N+1,)`` or ``(N+1, channels)``; ``t`` a scalar or array.
    Uses the second barycentric form, exact at the nodes. No extrapolation.
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {vals.shape[0]}")
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    tol = _domain_tol(grid)
    if np.any(t_arr < grid.t0 - tol) or np.any(t_arr > grid.tf + tol):
        raise ValueError(f"t outside [{grid.t0}, {grid.tf}]; extrapolation is not supported")
    t_arr = np.clip(t_arr, grid.t0, grid.tf)

    nodes = grid.times
    w = grid.base.bary_weights
    diff = t_arr[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    c = w[None, :] / diff
    flat = vals.reshape(grid.size, -1)
    out = (c @ flat) / c.sum(axis=1, keepdims=True)
    hit_rows, hit_cols = np.nonzero(exact)
    out[hit_rows] = flat[hit_cols]
    out = out.reshape((t_arr.size,) + vals.shape[1:])
    return out[0] if scalar else out


def quadrature(values, grid: ScaledGrid) -> float:
    """Clenshaw-Curtis approximation of the integral over ``[t0, tf]``."""
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {vals.shape[0]}")
    total = np.tensordot(grid.scaled_weights, vals, axes=(0, 0))
    return float(total) if vals.ndim == 1 else total

"""Direct collocation transcription of the trajectory problem into an NLP.

Decision vector ``z = [t0, tf, X (P x 13, row-major), U (P x 4, row-major)]``
where ``P`` counts collocation points over all segments. Neighbouring
segments each keep their own copy of the shared interface node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import partial
from types import SimpleNamespace

import jax
import numpy as np
import scipy.sparse as sp

from . import cheb
from .dynamics import CONTROL_DIM, CONTROL_NAMES, IDENTITY_QUAT, STATE_DIM, STATE_NAMES, rhs
from .environment import Scenario, safety_radius
from .params import CRAZYFLIE, DEFAULT_WEIGHTS, CriterionWeights, UavParams
from .solver import NlpProblem

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402

MIN_SEGMENT_DEGREE = 3
POINT_DIM = STATE_DIM + CONTROL_DIM
# state entries weighted by the quadratic term (everything but the quaternion)
_QUAD_STATE = np.r_[0:6, 10:13]


# ---------------------------------------------------------------- mesh


@dataclass(frozen=True)
class Segment:
    degree: int
    fraction: float

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < MIN_SEGMENT_DEGREE:
            raise ValueError(f"segment degree must be an integer >= {MIN_SEGMENT_DEGREE}")
        if self.degree > cheb.MAX_DEGREE:
            raise ValueError(f"segment degree {self.degree} exceeds {cheb.MAX_DEGREE}")
        if not self.fraction > 0:
            raise ValueError("segment fraction must be positive")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "fraction", float(self.fraction))


@dataclass(frozen=True)
class Mesh:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("mesh needs at least one segment")
        total = math.fsum(s.fraction for s in segs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"segment fractions sum to {total!r}, not 1")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def single(cls, degree: int) -> "Mesh":
        return cls((Segment(degree, 1.0),))

    @classmethod
    def uniform(cls, count: int, degree: int) -> "Mesh":
        return cls.from_breaks(np.linspace(0.0, 1.0, count + 1), [degree] * count)

    @classmethod
    def from_breaks(cls, breaks, degrees) -> "Mesh":
        """Segments between normalised break points ``0 = b_0 < ... < b_S = 1``."""
        b = np.asarray(breaks, float)
        if len(b) != len(degrees) + 1 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breaks must increase from 0 to 1 with one more entry than degrees")
        fr = [Fraction(float(v)) for v in b]
        fracs = [float(fr[i + 1] - fr[i]) for i in range(len(degrees))]
        # absorb rounding into the largest segment so the sum is exactly representable
        i_max = int(np.argmax(fracs))
        fracs[i_max] = 1.0 - math.fsum(f for i, f in enumerate(fracs) if i != i_max)
        return cls(tuple(Segment(d, f) for d, f in zip(degrees, fracs)))

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(s.degree for s in self.segments)

    @property
    def fractions(self) -> np.ndarray:
        return np.array([s.fraction for s in self.segments])

    @property
    def breaks(self) -> np.ndarray:
        """Normalised segment boundaries in [0, 1]."""
        b = np.concatenate([[0.0], np.cumsum(self.fractions)])
        b[-1] = 1.0
        return b

    @property
    def point_counts(self) -> tuple[int, ...]:
        return tuple(d + 1 for d in self.degrees)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.point_counts)[:-1]]).astype(int)

    @property
    def total_points(self) -> int:
        return sum(self.point_counts)

    def __len__(self) -> int:
        return len(self.segments)

    def grids(self, t0: float, tf: float) -> list[cheb.ScaledGrid]:
        b = t0 + self.breaks * (tf - t0)
        return [cheb.scale_grid(cheb.collocation_grid(s.degree), b[i], b[i + 1])
                for i, s in enumerate(self.segments)]

    def times(self, t0: float, tf: float) -> np.ndarray:
        return np.concatenate([g.times for g in self.grids(t0, tf)])

    def to_dict(self) -> dict:
        return {"segments": [{"degree": s.degree, "fraction": s.fraction} for s in self.segments]}

    @classmethod
    def from_dict(cls, d) -> "Mesh":
        return cls(tuple(Segment(int(s["degree"]), float(s["fraction"])) for s in d["segments"]))


# ---------------------------------------------------------------- layout


@dataclass(frozen=True)
class DecisionLayout:
    points: int

    T0 = 0
    TF = 1

    @property
    def size(self) -> int:
        return 2 + POINT_DIM * self.points

    @property
    def state_offset(self) -> int:
        return 2

    @property
    def control_offset(self) -> int:
        return 2 + STATE_DIM * self.points

    def state_index(self, point: int, component: int) -> int:
        self._check(point, component, STATE_DIM)
        return self.state_offset + STATE_DIM * point + component

    def control_index(self, point: int, component: int) -> int:
        self._check(point, component, CONTROL_DIM)
        return self.control_offset + CONTROL_DIM * point + component

    def _check(self, point, component, dim):
        if not (0 <= point < self.points and 0 <= component < dim):
            raise IndexError(f"point {point} / component {component} out of range")

    def describe(self, index: int) -> tuple[str, int, str]:
        """Inverse map: ``index -> (block, point, component name)``."""
        if index == self.T0:
            return ("time", -1, "t0")
        if index == self.TF:
            return ("time", -1, "tf")
        if self.state_offset <= index < self.control_offset:
            k, i = divmod(index - self.state_offset, STATE_DIM)
            return ("state", k, STATE_NAMES[i])
        if self.control_offset <= index < self.size:
            k, i = divmod(index - self.control_offset, CONTROL_DIM)
            return ("control", k, CONTROL_NAMES[i])
        raise IndexError(f"index {index} outside decision vector of size {self.size}")

    def index_of(self, block: str, point: int, name: str) -> int:
        if block == "time":
            return {"t0": self.T0, "tf": self.TF}[name]
        if block == "state":
            return self.state_index(point, STATE_NAMES.index(name))
        if block == "control":
            return self.control_index(point, CONTROL_NAMES.index(name))
        raise KeyError(block)

    def pack(self, t0, tf, X, U) -> np.ndarray:
        X = np.asarray(X, float)
        U = np.asarray(U, float)
        if X.shape != (self.points, STATE_DIM) or U.shape != (self.points, CONTROL_DIM):
            raise ValueError("state/control arrays do not match the layout")
        return np.concatenate([[float(t0), float(tf)], X.ravel(), U.ravel()])

    def unpack(self, z):
        z = np.asarray(z, float)
        if z.shape != (self.size,):
            raise ValueError(f"decision vector has shape {z.shape}, expected ({self.size},)")
        X = z[self.state_offset:self.control_offset].reshape(self.points, STATE_DIM)
        U = z[self.control_offset:].reshape(self.points, CONTROL_DIM)
        return z[0], z[1], X, U


# ---------------------------------------------------------------- criterion


def _running_cost(x, u, x_goal, u_goal, q_state, q_quat, r_control, smooth, xp=np, chordal=False):
    dx = x - x_goal
    du = u - u_goal
    quad = (dx[..., _QUAD_STATE] ** 2 * q_state).sum(axis=-1)
    dot = 1.0 - (x[..., 6:10] * x_goal[..., 6:10]).sum(axis=-1)
    if chordal:
        # equals |1 - q.qf| for unit q and qf, smooth and without a pull off the sphere
        qterm = 0.5 * (dx[..., 6:10] ** 2).sum(axis=-1)
    elif smooth > 0:
        qterm = xp.sqrt(dot * dot + smooth * smooth) - smooth
    else:
        # one-sided at the kink: inside the box dot >= 0 and the term is linear
        qterm = xp.where(dot >= 0, dot, -dot)
    return quad + q_quat * qterm + (du ** 2 * r_control).sum(axis=-1)


def criterion_integrand(x, u, x_goal, u_goal, weights: CriterionWeights = DEFAULT_WEIGHTS):
    """Running cost: weighted squared state/control deviation plus quaternion misalignment."""
    xa = x.as_array() if hasattr(x, "as_array") else np.asarray(x, float)
    ua = u.as_array() if hasattr(u, "as_array") else np.asarray(u, float)
    xg = x_goal.as_array() if hasattr(x_goal, "as_array") else np.asarray(x_goal, float)
    ug = u_goal.as_array() if hasattr(u_goal, "as_array") else np.asarray(u_goal, float)
    val = _running_cost(xa, ua, xg, ug, np.asarray(weights.q_state), weights.q_quat,
                        np.asarray(weights.r_control), weights.quat_smoothing)
    return float(val) if np.ndim(val) == 0 else np.asarray(val)


def boundary_states(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Hover at the start and goal positions."""
    def hover(p):
        return np.concatenate([p, np.zeros(3), IDENTITY_QUAT, np.zeros(3)])
    return hover(np.asarray(scenario.start, float)), hover(np.asarray(scenario.goal, float))


def hover_control(params: UavParams = CRAZYFLIE) -> np.ndarray:
    return np.array([params.hover_thrust, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------- jax kernels


def _param_vector(params: UavParams) -> np.ndarray:
    return np.concatenate([[params.mass, params.g], params.inertia_diag, params.kd.ravel()])


def _traced_params(pv):
    return SimpleNamespace(mass=pv[0], g=pv[1], inertia_diag=(pv[2], pv[3], pv[4]),
                           kd=pv[5:14].reshape(3, 3))


def _point_rhs(xu, pv):
    return rhs(xu[:STATE_DIM], xu[STATE_DIM:], _traced_params(pv), jnp)


def _point_cost(xu, goal, wv, form):
    smooth, chordal = form
    return _running_cost(xu[:STATE_DIM], xu[STATE_DIM:], goal[:STATE_DIM], goal[STATE_DIM:],
                         wv[:9], wv[9], wv[10:14], smooth, jnp, chordal)


@partial(jax.jit, static_argnums=4)
def _kernel_values(XU, pv, goal, wv, form):
    F = jax.vmap(_point_rhs, (0, None))(XU, pv)
    L = jax.vmap(_point_cost, (0, None, None, None))(XU, goal, wv, form)
    return F, L


@partial(jax.jit, static_argnums=4)
def _kernel_derivs(XU, pv, goal, wv, form):
    F = jax.vmap(_point_rhs, (0, None))(XU, pv)
    JF = jax.vmap(jax.jacfwd(_point_rhs), (0, None))(XU, pv)
    L, GL = jax.vmap(jax.value_and_grad(_point_cost), (0, None, None, None))(XU, goal, wv, form)
    return F, JF, L, GL


def _point_lagrangian(v, pv, goal, wv, form, coef, lam_d, lam_n, mu, centers, radii2):
    """Nonlinear Lagrangian terms of one point over ``(x, u, t0, tf)``."""
    xu = v[:POINT_DIM]
    half = 0.5 * (v[POINT_DIM + 1] - v[POINT_DIM])
    val = coef[0] * half * _point_cost(xu, goal, wv, form)
    val -= coef[1] * half * (lam_d @ _point_rhs(xu, pv))
    q = xu[6:10]
    val += lam_n * (q @ q)
    d = xu[None, 0:2] - centers
    return val + mu @ (radii2 - (d ** 2).sum(-1))


@partial(jax.jit, static_argnums=4)
def _kernel_hessians(V, pv, goal, wv, form, coef, lam_d, lam_n, mu, centers, radii2):
    fun = partial(_point_lagrangian, form=form)

    def point(v, c, ld, ln, m):
        return jax.hessian(fun)(v, pv, goal, wv, coef=c, lam_d=ld, lam_n=ln, mu=m,
                                centers=centers, radii2=radii2)

    return jax.vmap(point)(V, coef, lam_d, lam_n, mu)


def _bucket(P: int) -> int:
    return 32 * ((P + 31) // 32)


# ---------------------------------------------------------------- NLP


@dataclass(frozen=True)
class TranscriptionOptions:
    """``chordal_attitude`` evaluates the attitude term as ``|q - qf|^2 / 2``,
    identical to ``|1 - q.qf|`` on unit quaternions but smooth and neutral
    about the quaternion norm, which the solver handles far better.
    ``fix_boundary_bounds`` additionally pins the boundary values through
    equal variable bounds, which keeps them exact at every iterate."""

    boundary_controls: bool = False
    chordal_attitude: bool = False
    fix_boundary_bounds: bool = True


class Transcription:
    """Numerical core of one NLP instance. Immutable after construction."""

    def __init__(self, scenario: Scenario, params: UavParams, mesh: Mesh,
                 weights: CriterionWeights, options: TranscriptionOptions):
        self.scenario = scenario
        self.params = params
        self.mesh = mesh
        self.weights = weights
        self.options = options
        P = mesh.total_points
        self.P = P
        self.layout = DecisionLayout(P)
        self.columns = list(scenario.columns)
        self.r_safe = safety_radius(params)
        self.x_start, self.x_goal = boundary_states(scenario)
        self.u_hover = hover_control(params)
        self.goal = np.concatenate([self.x_goal, self.u_hover])
        self.pv = _param_vector(params)
        self.wv = np.concatenate([weights.q_state, [weights.q_quat], weights.r_control])
        self.form = (float(weights.quat_smoothing), bool(options.chordal_attitude))

        offs = mesh.offsets
        seg_of_point = np.repeat(np.arange(len(mesh)), mesh.point_counts)
        fracs = mesh.fractions
        self.point_frac = fracs[seg_of_point]
        self.quad_w = np.concatenate(
            [cheb.collocation_grid(s.degree).weights * s.fraction for s in mesh.segments])
        self.diff_blocks = [np.asarray(cheb.collocation_grid(s.degree).diff_matrix) for s in mesh.segments]
        self.seg_slices = [slice(o, o + n) for o, n in zip(offs, mesh.point_counts)]
        self.interfaces = [(offs[s] + mesh.point_counts[s] - 1, offs[s + 1]) for s in range(len(mesh) - 1)]

        n_bc = 2 * STATE_DIM + (2 * CONTROL_DIM if options.boundary_controls else 0)
        self.m_defect = STATE_DIM * P
        self.m_norm = P
        self.m_bc = n_bc
        self.m_cont = POINT_DIM * len(self.interfaces)
        self.m_eq = self.m_defect + self.m_norm + self.m_bc + self.m_cont
        self.m_ineq = P * len(self.columns)
        self._build_patterns()

        xlo, xhi = scenario.limits.state_bounds()
        ulo, uhi = scenario.limits.control_bounds()
        self.lower = np.concatenate([[0.0, 0.0], np.tile(xlo, P), np.tile(ulo, P)])
        self.upper = np.concatenate([[0.0, params.max_flight_time], np.tile(xhi, P), np.tile(uhi, P)])
        if options.fix_boundary_bounds:
            # the boundary equalities also become equal bounds (same feasible set)
            lay = self.layout
            ends = [(lay.state_index(0, 0), self.x_start), (lay.state_index(P - 1, 0), self.x_goal)]
            if options.boundary_controls:
                ends += [(lay.control_index(0, 0), self.u_hover), (lay.control_index(P - 1, 0), self.u_hover)]
            for start, val in ends:
                self.lower[start:start + val.size] = self.upper[start:start + val.size] = val
        scale = np.ones(self.layout.size)
        scale[self.layout.control_offset:] = np.tile([0.1, 1e-3, 1e-3, 1e-3], P)
        scale[1] = 10.0
        self.scale = scale

    # -- sparsity patterns (constant parts precomputed once)
    def _build_patterns(self):
        L = self.layout
        P = self.P
        xo, uo = L.state_offset, L.control_offset
        rows, cols = [], []
        # D (x) I_13 entries
        for sl, D in zip(self.seg_slices, self.diff_blocks):
            n = D.shape[0]
            j, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            k_row = sl.start + j.ravel()
            k_col = sl.start + l.ravel()
            for i in range(STATE_DIM):
                rows.append(STATE_DIM * k_row + i)
                cols.append(xo + STATE_DIM * k_col + i)
        self._dconst_rows = np.concatenate(rows)
        self._dconst_cols = np.concatenate(cols)
        # per-point 13 x 17 blocks of the dynamics Jacobian
        k = np.arange(P)[:, None, None]
        i = np.arange(STATE_DIM)[None, :, None]
        c = np.arange(POINT_DIM)[None, None, :]
        self._blk_rows = np.broadcast_to(STATE_DIM * k + i, (P, STATE_DIM, POINT_DIM)).ravel()
        col_idx = np.where(c < STATE_DIM, xo + STATE_DIM * k + c, uo + CONTROL_DIM * k + (c - STATE_DIM))
        self._blk_cols = np.broadcast_to(col_idx, (P, STATE_DIM, POINT_DIM)).ravel()
        # rows above run channel-major within each segment
        self._dconst_data = np.concatenate([np.tile(D.ravel(), STATE_DIM) for D in self.diff_blocks])
        self._time_rows = np.arange(STATE_DIM * P)

    def _xu(self, z):
        _, _, X, U = self.layout.unpack(z)
        return X, U

    def _eval(self, z, derivs: bool):
        X, U = self._xu(z)
        XU = np.concatenate([X, U], axis=1)
        P = self.P
        pad = _bucket(P) - P
        if pad:
            XU = np.concatenate([XU, np.repeat(self.goal[None, :], pad, 0)])
        args = (jnp.asarray(XU), self.pv, self.goal, self.wv, self.form)
        if derivs:
            F, JF, Lv, GL = _kernel_derivs(*args)
            return (np.asarray(F)[:P], np.asarray(JF)[:P], np.asarray(Lv)[:P], np.asarray(GL)[:P])
        F, Lv = _kernel_values(*args)
        return np.asarray(F)[:P], np.asarray(Lv)[:P]

    # -- objective
    def objective(self, z) -> float:
        z = np.asarray(z, float)
        _, Lv = self._eval(z, False)
        half = 0.5 * (z[1] - z[0])
        return float(half * (self.quad_w @ Lv))

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, float)
        _, _, Lv, GL = self._eval(z, True)
        half = 0.5 * (z[1] - z[0])
        g = np.zeros(self.layout.size)
        s = 0.5 * (self.quad_w @ Lv)
        g[0], g[1] = -s, s
        wg = (half * self.quad_w)[:, None] * GL
        g[self.layout.state_offset:self.layout.control_offset] = wg[:, :STATE_DIM].ravel()
        g[self.layout.control_offset:] = wg[:, STATE_DIM:].ravel()
        return g

    # -- equalities
    def eq(self, z) -> np.ndarray:
        z = np.asarray(z, float)
        X, U = self._xu(z)
        F, _ = self._eval(z, False)
        half = 0.5 * (z[1] - z[0])
        defects = []
        for sl, D in zip(self.seg_slices, self.diff_blocks):
            defects.append(D @ X[sl] - (half * self.point_frac[sl])[:, None] * F[sl])
        parts = [np.concatenate(defects).ravel(), (X[:, 6:10] ** 2).sum(axis=1) - 1.0,
                 X[0] - self.x_start, X[-1] - self.x_goal]
        if self.options.boundary_controls:
            parts += [U[0] - self.u_hover, U[-1] - self.u_hover]
        for a, b in self.interfaces:
            parts += [X[a] - X[b], U[a] - U[b]]
        return np.concatenate(parts)

    def eq_jacobian(self, z):
        z = np.asarray(z, float)
        L = self.layout
        X, U = self._xu(z)
        F, JF, _, _ = self._eval(z, True)
        half = 0.5 * (z[1] - z[0])
        P = self.P
        fr = self.point_frac
        rows = [self._dconst_rows, self._blk_rows, self._time_rows, self._time_rows]
        cols = [self._dconst_cols, self._blk_cols,
                np.full(STATE_DIM * P, L.TF), np.full(STATE_DIM * P, L.T0)]
        data = [self._dconst_data, (-(half * fr)[:, None, None] * JF).ravel(),
                (-0.5 * fr[:, None] * F).ravel(), (0.5 * fr[:, None] * F).ravel()]
        r0 = self.m_defect
        # unit quaternion norm
        k = np.repeat(np.arange(P), 4)
        rows.append(r0 + k)
        cols.append(L.state_offset + STATE_DIM * k + np.tile(np.arange(6, 10), P))
        data.append(2.0 * X[:, 6:10].ravel())
        r0 += P
        # boundary conditions and interface continuity: unit entries
        def unit(r, c, sign=1.0):
            rows.append(np.asarray(r))
            cols.append(np.asarray(c))
            data.append(np.full(len(r), sign))
        ar13 = np.arange(STATE_DIM)
        ar4 = np.arange(CONTROL_DIM)
        unit(r0 + ar13, L.state_offset + ar13)
        unit(r0 + STATE_DIM + ar13, L.state_offset + STATE_DIM * (P - 1) + ar13)
        r0 += 2 * STATE_DIM
        if self.options.boundary_controls:
            unit(r0 + ar4, L.control_offset + ar4)
            unit(r0 + CONTROL_DIM + ar4, L.control_offset + CONTROL_DIM * (P - 1) + ar4)
            r0 += 2 * CONTROL_DIM
        for a, b in self.interfaces:
            unit(r0 + ar13, L.state_offset + STATE_DIM * a + ar13)
            unit(r0 + ar13, L.state_offset + STATE_DIM * b + ar13, -1.0)
            r0 += STATE_DIM
            unit(r0 + ar4, L.control_offset + CONTROL_DIM * a + ar4)
            unit(r0 + ar4, L.control_offset + CONTROL_DIM * b + ar4, -1.0)
            r0 += CONTROL_DIM
        J = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.m_eq, L.size))
        return J

    # -- element structure: every nonlinear term depends on one point plus (t0, tf)
    @property
    def element_index(self) -> np.ndarray:
        L = self.layout
        k = np.arange(self.P)[:, None]
        xs = L.state_offset + STATE_DIM * k + np.arange(STATE_DIM)[None, :]
        us = L.control_offset + CONTROL_DIM * k + np.arange(CONTROL_DIM)[None, :]
        times = np.broadcast_to([L.T0, L.TF], (self.P, 2))
        return np.hstack([xs, us, times])

    def element_gradient(self, z, sigma, lam_eq, lam_ineq) -> np.ndarray:
        """Per-point gradients of the nonlinear part of
        ``sigma f + lam_eq . c + lam_ineq . g`` over :attr:`element_index`."""
        z = np.asarray(z, float)
        X, _ = self._xu(z)
        F, JF, Lv, GL = self._eval(z, True)
        half = 0.5 * (z[1] - z[0])
        fr = self.point_frac
        lam_d = np.asarray(lam_eq[:self.m_defect]).reshape(self.P, STATE_DIM)
        lam_n = np.asarray(lam_eq[self.m_defect:self.m_defect + self.m_norm])
        G = np.zeros((self.P, POINT_DIM + 2))
        G[:, :POINT_DIM] = (sigma * half * self.quad_w)[:, None] * GL
        G[:, :POINT_DIM] -= (half * fr)[:, None] * np.einsum("ki,kij->kj", lam_d, JF)
        G[:, 6:10] += 2.0 * lam_n[:, None] * X[:, 6:10]
        dt = 0.5 * (sigma * self.quad_w * Lv - fr * (lam_d * F).sum(axis=1))
        G[:, POINT_DIM] = -dt
        G[:, POINT_DIM + 1] = dt
        if self.columns:
            mu = np.asarray(lam_ineq).reshape(self.P, len(self.columns))
            d = X[:, None, :2] - self._centers[None]
            G[:, 0:2] -= 2.0 * (mu[:, :, None] * d).sum(axis=1)
        return G

    def element_hessian(self, z, sigma, lam_eq, lam_ineq) -> np.ndarray:
        """Per-point Hessian blocks matching :meth:`element_gradient`, shape ``(P, 19, 19)``."""
        z = np.asarray(z, float)
        X, U = self._xu(z)
        P = self.P
        pad = _bucket(P) - P
        n_col = len(self.columns)
        V = np.concatenate([X, U, np.broadcast_to(z[:2], (P, 2))], axis=1)
        coef = np.column_stack([sigma * self.quad_w, self.point_frac])
        lam_d = np.asarray(lam_eq[:self.m_defect], float).reshape(P, STATE_DIM)
        lam_n = np.asarray(lam_eq[self.m_defect:self.m_defect + self.m_norm], float)
        mu = np.asarray(lam_ineq, float).reshape(P, n_col)
        if pad:
            V = np.concatenate([V, np.repeat(V[-1:], pad, 0)])
            coef, lam_d, mu = (np.concatenate([a, np.zeros((pad,) + a.shape[1:])]) for a in (coef, lam_d, mu))
            lam_n = np.concatenate([lam_n, np.zeros(pad)])
        centers = self._centers.reshape(n_col, 2)
        radii2 = self._radii2.reshape(n_col)
        H = _kernel_hessians(jnp.asarray(V), self.pv, self.goal, self.wv, self.form, coef, lam_d,
                             lam_n, mu, centers, radii2)
        return np.asarray(H)[:P]

    # -- inequalities: feasible iff <= 0
    def ineq(self, z) -> np.ndarray:
        if not self.columns:
            return np.zeros(0)
        X, _ = self._xu(np.asarray(z, float))
        d = X[:, None, :2] - self._centers[None]
        return (self._radii2[None] - (d ** 2).sum(-1)).ravel()

    def ineq_jacobian(self, z):
        L = self.layout
        if not self.columns:
            return sp.csr_matrix((0, L.size))
        X, _ = self._xu(np.asarray(z, float))
        C = len(self.columns)
        d = X[:, None, :2] - self._centers[None]          # (P, C, 2)
        r = np.repeat(np.arange(self.P * C), 2)
        k = np.repeat(np.arange(self.P), C)
        c = (L.state_offset + STATE_DIM * k)[:, None] + np.arange(2)[None, :]
        return sp.csr_matrix(((-2.0 * d).ravel(), (r, c.ravel())), shape=(self.m_ineq, L.size))

    @property
    def _centers(self):
        return np.array([c.center for c in self.columns], float)

    @property
    def _radii2(self):
        return (np.array([c.radius for c in self.columns]) + self.r_safe) ** 2

    def stats(self) -> dict:
        return {
            "variables": self.layout.size,
            "points": self.P,
            "segments": len(self.mesh),
            "equalities": self.m_eq,
            "inequalities": self.m_ineq,
            "eq_jacobian_nnz": int(self.eq_jacobian(self._probe()).nnz),
            "ineq_jacobian_nnz": 2 * self.m_ineq,
        }

    def _probe(self):
        X = np.repeat(self.x_goal[None], self.P, 0)
        U = np.repeat(self.u_hover[None], self.P, 0)
        return self.layout.pack(0.0, 1.0, X, U)


def build_nlp(scenario: Scenario, params: UavParams = CRAZYFLIE, mesh: Mesh | None = None,
              weights: CriterionWeights = DEFAULT_WEIGHTS,
              options: TranscriptionOptions = TranscriptionOptions()) -> NlpProblem:
    """Collocation NLP for ``scenario`` on ``mesh``."""
    if mesh is None:
        raise ValueError("a mesh is required")
    if not isinstance(mesh, Mesh):
        raise TypeError("mesh must be a Mesh")
    lo, hi = scenario.workspace_bounds
    if any(a >= b for a, b in zip(lo, hi)):
        raise ValueError("degenerate workspace")
    tr = Transcription(scenario, params, mesh, weights, options)
    return NlpProblem(
        n=tr.layout.size,
        objective=tr.objective,
        gradient=tr.gradient,
        lower=tr.lower,
        upper=tr.upper,
        eq=tr.eq,
        eq_jacobian=tr.eq_jacobian,
        ineq=tr.ineq,
        ineq_jacobian=tr.ineq_jacobian,
        m_eq=tr.m_eq,
        m_ineq=tr.m_ineq,
        element_index=tr.element_index,
        element_gradient=tr.element_gradient,
        element_hessian=tr.element_hessian,
        scale=tr.scale,
        layout=tr.layout,
        info={"transcription": tr, "mesh": mesh},
    )


# ---------------------------------------------------------------- trajectory


class Trajectory:
    """Piecewise interpolating polynomials through the collocation values.

    A time on a segment boundary belongs to the segment on its right, except
    ``tf`` which belongs to the last segment.
    """

    def __init__(self, mesh: Mesh, t0: float, tf: float, X, U):
        self.mesh = mesh
        self.t0 = float(t0)
        self.tf = float(tf)
        self.X = np.array(X, float)
        self.U = np.array(U, float)
        if self.X.shape != (mesh.total_points, STATE_DIM) or self.U.shape != (mesh.total_points, CONTROL_DIM):
            raise ValueError("state/control arrays do not match the mesh")
        self.grids = mesh.grids(self.t0, self.tf)
        offs = mesh.offsets
        self.slices = [slice(o, o + g.size) for o, g in zip(offs, self.grids)]
        self.bounds = np.array([g.t0 for g in self.grids] + [self.grids[-1].tf])

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([g.times for g in self.grids])

    def segment_index(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, float))
        tol = 1e-12 * max(1.0, abs(self.tf))
        if np.any(t < self.t0 - tol) or np.any(t > self.tf + tol):
            raise ValueError(f"time outside [{self.t0}, {self.tf}]")
        idx = np.searchsorted(self.bounds, t, side="right") - 1
        return np.clip(idx, 0, len(self.grids) - 1)

    def _evaluate(self, values_per_seg, t):
        t_arr = np.asarray(t, float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr)
        seg = self.segment_index(t_arr)
        dim = values_per_seg[0].shape[1]
        out = np.empty((t_arr.size, dim))
        for s in np.unique(seg):
            m = seg == s
            g = self.grids[s]
            out[m] = cheb.interpolate(values_per_seg[s], g, np.clip(t_arr[m], g.t0, g.tf))
        return out[0] if scalar else out

    def state(self, t):
        return self._evaluate([self.X[sl] for sl in self.slices], t)

    def control(self, t):
        return self._evaluate([self.U[sl] for sl in self.slices], t)

    def state_rate(self, t):
        """Time derivative of the state polynomial."""
        return self._evaluate([g.scaled_diff @ self.X[sl] for g, sl in zip(self.grids, self.slices)], t)

    def segment_state(self, s: int, t):
        g = self.grids[s]
        return cheb.interpolate(self.X[self.slices[s]], g, t)

    def segment_state_rate(self, s: int, t):
        g = self.grids[s]
        return cheb.interpolate(g.scaled_diff @ self.X[self.slices[s]], g, t)

    def segment_control(self, s: int, t):
        g = self.grids[s]
        return cheb.interpolate(self.U[self.slices[s]], g, t)

    def to_decision(self) -> np.ndarray:
        return DecisionLayout(self.mesh.total_points).pack(self.t0, self.tf, self.X, self.U)


def extract_trajectory(solution, mesh: Mesh, layout: DecisionLayout | None = None) -> Trajectory:
    layout = layout or DecisionLayout(mesh.total_points)
    if layout.points != mesh.total_points:
        raise ValueError("layout does not match the mesh")
    t0, tf, X, U = layout.unpack(solution)
    return Trajectory(mesh, t0, tf, X, U)

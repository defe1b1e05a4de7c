"""NLP solver boundary and the built-in augmented-Lagrangian reference solver.

Problems have the form::

    min f(z)  s.t.  c(z) = 0,  g(z) <= 0,  lower <= z <= upper

The reference solver runs a Powell-Hestenes-Rockafellar augmented Lagrangian
outer loop. Each box-constrained subproblem is minimised by a projected
quasi-Newton method whose model Hessian is a limited-memory BFGS estimate of
the Lagrangian curvature plus the exact Gauss-Newton term ``rho J'J`` of the
penalty. ``inner="lbfgs"`` uses plain L-BFGS-B instead.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

log = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    CONVERGED = "Converged"
    ITERATION_LIMIT = "IterationLimit"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 3000
    constraint_tolerance: float = 1e-6
    optimality_tolerance: float = 1e-6
    wall_clock_budget: float = 900.0
    inner: str = "structured"
    curvature: str = "exact"
    memory: int = 12
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    max_penalty: float = 1e6
    inner_iterations: int = 600
    verbose: bool = False

    def __post_init__(self):
        for name in ("max_iterations", "constraint_tolerance", "optimality_tolerance",
                     "wall_clock_budget", "initial_penalty", "memory", "inner_iterations"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.inner not in ("structured", "lbfgs"):
            raise ValueError(f"unknown inner solver {self.inner!r}")
        if self.curvature not in ("exact", "difference", "bfgs"):
            raise ValueError(f"unknown curvature model {self.curvature!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(eq=False)
class NlpProblem:
    """Callbacks and bounds of a smooth NLP.

    Jacobians may be dense arrays or scipy sparse matrices. ``scale`` holds
    typical variable magnitudes; the solver works in ``z / scale``.

    Optional element structure: row ``e`` of ``element_index`` lists the
    variables of element ``e`` and ``element_gradient(z, sigma, lam_eq,
    lam_ineq)`` returns, per element, the gradient of the nonlinear part of
    ``sigma f + lam_eq . c + lam_ineq . g`` that depends on those variables
    only. Terms outside all elements must be linear. ``element_hessian``
    with the same arguments may return the matching per-element Hessians.
    """

    n: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    eq: Callable | None = None
    eq_jacobian: Callable | None = None
    ineq: Callable | None = None
    ineq_jacobian: Callable | None = None
    m_eq: int = 0
    m_ineq: int = 0
    scale: np.ndarray | None = None
    element_index: np.ndarray | None = None
    element_gradient: Callable | None = None
    element_hessian: Callable | None = None
    layout: Any = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = np.broadcast_to(np.asarray(self.lower, float), (self.n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, float), (self.n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def eq_values(self, z) -> np.ndarray:
        return np.asarray(self.eq(z), float) if self.m_eq else np.zeros(0)

    def ineq_values(self, z) -> np.ndarray:
        return np.asarray(self.ineq(z), float) if self.m_ineq else np.zeros(0)

    def eq_jac(self, z):
        return sp.csr_matrix(self.eq_jacobian(z)) if self.m_eq else sp.csr_matrix((0, self.n))

    def ineq_jac(self, z):
        return sp.csr_matrix(self.ineq_jacobian(z)) if self.m_ineq else sp.csr_matrix((0, self.n))

    def max_violation(self, z) -> float:
        """Largest equality, inequality or bound violation at ``z``."""
        z = np.asarray(z, float)
        parts = [0.0]
        if self.m_eq:
            parts.append(np.max(np.abs(self.eq_values(z))))
        if self.m_ineq:
            parts.append(np.max(self.ineq_values(z), initial=0.0))
        parts.append(np.max(self.lower - z, initial=0.0))
        parts.append(np.max(z - self.upper, initial=0.0))
        return float(max(parts))


@dataclass
class SolveResult:
    point: np.ndarray
    status: SolveStatus
    objective: float
    max_constraint_violation: float
    iterations: int
    wall_time: float
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    outer_iterations: int = 0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "max_constraint_violation": self.max_constraint_violation,
            "iterations": self.iterations,
            "outer_iterations": self.outer_iterations,
            "wall_time": self.wall_time,
            "message": self.message,
        }


class _Scaled:
    """The problem in scaled variables ``y = z / scale`` with gradient-based row scaling."""

    def __init__(self, prob: NlpProblem, z0: np.ndarray):
        self.p = prob
        self.s = np.ones(prob.n) if prob.scale is None else np.asarray(prob.scale, float)
        self.lo = prob.lower / self.s
        self.hi = prob.upper / self.s
        self._S = sp.diags(self.s)
        g0 = prob.gradient(z0) * self.s
        self.fs = min(1.0, 100.0 / max(np.max(np.abs(g0), initial=0.0), 1e-300))
        self.es = self._row_scale(prob.eq_jac(z0) @ self._S)
        self.is_ = self._row_scale(prob.ineq_jac(z0) @ self._S)

    @staticmethod
    def _row_scale(J) -> np.ndarray:
        if J.shape[0] == 0:
            return np.ones(0)
        m = np.asarray(abs(J).max(axis=1).todense()).ravel()
        return np.minimum(1.0, 100.0 / np.maximum(m, 1e-300))

    def z(self, y):
        return y * self.s

    def f(self, y):
        return self.fs * self.p.objective(self.z(y))

    def grad(self, y):
        return self.fs * self.p.gradient(self.z(y)) * self.s

    def c(self, y):
        return self.es * self.p.eq_values(self.z(y))

    def g(self, y):
        return self.is_ * self.p.ineq_values(self.z(y))

    def jc(self, y):
        return (sp.diags(self.es) @ self.p.eq_jac(self.z(y)) @ self._S).tocsr()

    def jg(self, y):
        return (sp.diags(self.is_) @ self.p.ineq_jac(self.z(y)) @ self._S).tocsr()

    def element_grad(self, y, lam_hat, mu_hat, weight=1.0):
        idx = self.p.element_index
        G = self.p.element_gradient(self.z(y), weight * self.fs, self.es * lam_hat, self.is_ * mu_hat)
        return np.asarray(G) * self.s[idx]

    def element_hess(self, y, lam_hat, mu_hat, weight=1.0):
        s = self.s[self.p.element_index]
        H = self.p.element_hessian(self.z(y), weight * self.fs, self.es * lam_hat, self.is_ * mu_hat)
        return np.asarray(H) * s[:, :, None] * s[:, None, :]


class _AugLag:
    """PHR augmented Lagrangian with fixed multipliers and penalty.

    ``weight = 0`` drops the objective, leaving a pure penalty on the violation.
    """

    def __init__(self, sc: _Scaled, lam, mu, rho, weight: float = 1.0):
        self.sc, self.lam, self.mu, self.rho = sc, lam, mu, rho
        self.weight = weight

    def value(self, y) -> float:
        sc, rho = self.sc, self.rho
        c = sc.c(y)
        g = sc.g(y)
        v = self.weight * sc.f(y) + self.lam @ c + 0.5 * rho * (c @ c)
        if g.size:
            v += (np.sum(np.maximum(0.0, self.mu + rho * g) ** 2) - np.sum(self.mu ** 2)) / (2 * rho)
        return float(v)

    def derivatives(self, y):
        """Gradient, objective gradient, multiplier estimates and constraint Jacobians."""
        sc, rho = self.sc, self.rho
        lam_hat = self.lam + rho * sc.c(y)
        mu_hat = np.maximum(0.0, self.mu + rho * sc.g(y))
        Jc = sc.jc(y)
        Jg = sc.jg(y)
        obj_grad = self.weight * sc.grad(y)
        return obj_grad + Jc.T @ lam_hat + Jg.T @ mu_hat, obj_grad, lam_hat, mu_hat, Jc, Jg


def _stationarity(y, gr, lo, hi) -> float:
    """Largest gradient component not blocked by an active bound."""
    with np.errstate(invalid="ignore"):
        at_lo = y <= lo + 1e-12 * (1 + np.abs(lo))
        at_hi = y >= hi - 1e-12 * (1 + np.abs(hi))
    r = gr.copy()
    r[at_lo] = np.minimum(r[at_lo], 0.0)
    r[at_hi] = np.maximum(r[at_hi], 0.0)
    r[at_lo & at_hi] = 0.0
    return float(np.max(np.abs(r), initial=0.0))


class _Budget:
    def __init__(self, opts: SolveOptions):
        self.t0 = time.perf_counter()
        self.opts = opts
        self.iterations = 0

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    def exhausted(self) -> SolveStatus | None:
        if self.elapsed > self.opts.wall_clock_budget:
            return SolveStatus.TIME_LIMIT
        if self.iterations >= self.opts.max_iterations:
            return SolveStatus.ITERATION_LIMIT
        return None


class _ElementModel:
    """Lagrangian curvature assembled from per-element blocks.

    ``curvature="exact"`` takes the blocks from the problem's element
    Hessians when it supplies them and otherwise behaves like
    ``"difference"``, which rebuilds every block each iteration from
    forward differences of the element gradients: variables are private to an
    element except for a few shared ones, so perturbing local coordinate ``j``
    of all elements at once yields column ``j`` of every block from one
    gradient evaluation. ``curvature="bfgs"`` keeps damped BFGS blocks.
    """

    def __init__(self, index: np.ndarray, n: int, curvature: str):
        self.index = np.asarray(index)
        E, d = self.index.shape
        self.n = n
        self.curvature = curvature
        self.rows = np.repeat(self.index[:, :, None], d, 2).ravel()
        self.cols = np.repeat(self.index[:, None, :], d, 1).ravel()
        self.blocks = np.repeat(np.eye(d)[None], E, 0)
        self.fresh = np.ones(E, bool)
        self.delta = 0.0
        # perturbing column j must touch exactly one variable of each element
        self.columns = [np.unique(self.index[:, j]) for j in range(d)]

    @staticmethod
    def supports(index) -> bool:
        idx = np.asarray(index)
        for j in range(idx.shape[1]):
            hit = np.isin(idx, np.unique(idx[:, j]))
            if np.any(hit.sum(axis=1) != 1):
                return False
        return True

    def reset(self):
        self.blocks[:] = np.eye(self.blocks.shape[1])
        self.fresh[:] = True
        self.delta = max(self.delta, 1e-4)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.blocks.ravel(), (self.rows, self.cols)), shape=(self.n, self.n))

    def prepare(self, al, y, lam_hat, mu_hat, budget):
        if al.weight == 0.0 and not np.any(al.lam) and not np.any(al.mu):
            # pure least squares: Gauss-Newton, the penalty term carries the curvature
            self.blocks[:] = 0.0
            return
        if self.curvature == "bfgs":
            return
        sc = al.sc
        if self.curvature == "exact" and sc.p.element_hessian is not None:
            H = sc.element_hess(y, lam_hat, mu_hat, al.weight)
            self.blocks = 0.5 * (H + H.transpose(0, 2, 1))
            return
        G0 = sc.element_grad(y, lam_hat, mu_hat, al.weight)
        E, d = self.index.shape
        H = np.empty((E, d, d))
        for j, cols in enumerate(self.columns):
            h = 1e-7 * np.maximum(1.0, np.abs(y[cols]))
            # step inward when sitting on an upper bound
            h = np.where(y[cols] + h > sc.hi[cols], -h, h)
            yp = y.copy()
            yp[cols] += h
            step = yp[self.index[:, j]] - y[self.index[:, j]]
            H[:, :, j] = (sc.element_grad(yp, lam_hat, mu_hat, al.weight) - G0) / step[:, None]
        self.blocks = 0.5 * (H + H.transpose(0, 2, 1))

    def observe(self, al, step, y_old, y_new, lam_hat, mu_hat):
        if self.curvature != "bfgs":
            return
        sc = al.sc
        S = step[self.index]
        R = (sc.element_grad(y_new, lam_hat, mu_hat, al.weight)
             - sc.element_grad(y_old, lam_hat, mu_hat, al.weight))
        ss = (S * S).sum(1)
        sr = (S * R).sum(1)
        ok = ss > 1e-300
        init = ok & self.fresh & (sr > 0)
        if np.any(init):
            gamma = (R[init] * R[init]).sum(1) / sr[init]
            self.blocks[init] = np.eye(S.shape[1])[None] * np.clip(gamma, 1e-8, 1e8)[:, None, None]
            self.fresh[init] = False
        BS = np.einsum("eij,ej->ei", self.blocks, S)
        sBs = (S * BS).sum(1)
        ok &= sBs > 1e-300
        damp = ok & (sr < 0.2 * sBs)
        theta = np.ones_like(sr)
        theta[damp] = 0.8 * sBs[damp] / (sBs[damp] - sr[damp])
        R = theta[:, None] * R + (1 - theta)[:, None] * BS
        sr = (S * R).sum(1)
        ok &= sr > 1e-300
        if np.any(ok):
            Bo = self.blocks[ok]
            Bo -= np.einsum("ei,ej->eij", BS[ok], BS[ok]) / sBs[ok][:, None, None]
            Bo += np.einsum("ei,ej->eij", R[ok], R[ok]) / sr[ok][:, None, None]
            self.blocks[ok] = Bo

    def direction(self, B, g, rho, room_lo, room_hi):
        """Newton-like step on the condensed model ``H + rho B'B`` over the
        movable variables, shifted by ``delta I`` until it factors as positive
        definite and the step decreases the model."""
        movable = self.movable
        M0 = (self.matrix()[movable][:, movable] + rho * (B.T @ B)).toarray()
        delta = self.delta
        for _ in range(40):
            d = self._regularized_solve(M0, g, delta, room_lo, room_hi)
            if d is not None:
                self.delta = delta / 4.0 if delta > 1e-10 else 0.0
                return d
            delta = max(1e-10, 4.0 * delta)
        return None

    @classmethod
    def _regularized_solve(cls, M0, g, delta, room_lo, room_hi):
        """First of: active components moved by their diagonal Newton step with
        the rest re-solved (bounds re-pin what the step crosses), active
        components held, a scaled gradient step on the active components alone.
        Each must decrease ``g'd + d'M0 d / 2``; ``None`` means ``M0 + delta I``
        is not positive definite."""
        diag = np.maximum(np.diag(M0) + delta, 1e-12)
        active, shift = _active_set(diag, g, room_lo, room_hi)

        def decreases(d):
            return d is not None and g @ d < 0 and g @ d + 0.5 * d @ (M0 @ d) < 0

        for disp, rounds in ((shift, 8), (np.zeros_like(shift), 0)):
            try:
                d = cls._pinned_solve(M0, g, delta, room_lo, room_hi, active, disp, rounds)
            except la.LinAlgError:
                return None
            if decreases(d):
                return d
        curv = shift @ (M0 @ shift)
        if curv > 0 and g @ shift < 0:
            return min(1.0, -(g @ shift) / curv) * shift
        return None

    @staticmethod
    def _pinned_solve(M0, g, delta, room_lo, room_hi, pinned, disp, rounds):
        live = ~pinned
        d = np.where(pinned, disp, 0.0)
        for _ in range(rounds + 1):
            if not np.any(live):
                break
            idx = np.flatnonzero(live)
            M = M0[np.ix_(idx, idx)]
            M[np.diag_indices_from(M)] += delta
            rhs = -g[idx] - M0[np.ix_(idx, ~live)] @ d[~live]
            d[idx] = la.cho_solve(la.cho_factor(M, check_finite=False), rhs, check_finite=False)
            if not np.all(np.isfinite(d)):
                return None
            over = live & ((d > room_hi) | (d < -room_lo))
            if not np.any(over) or rounds == 0:
                break
            d[over] = np.where(d[over] > 0, room_hi[over], -room_lo[over])
            live &= ~over
        return d


def _active_set(diag, g, room_lo, room_hi, eps_max: float = 1e-3):
    """Components within ``eps`` of the bound their descent direction points
    at, with ``eps`` the largest diagonally scaled projected step (so the set
    tightens near a solution). Returns the mask and that step."""
    step = np.clip(-g / diag, -room_lo, room_hi)
    eps = min(eps_max, float(np.max(np.abs(step), initial=0.0)))
    active = ((g > 0) & (room_lo <= eps)) | ((g < 0) & (room_hi <= eps))
    return active, np.where(active, step, 0.0)


class _LbfgsModel:
    """Compact limited-memory BFGS model ``sigma I - W N W'`` for problems without elements."""

    def __init__(self, size: int):
        self.size = size
        self.S: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []
        self.sigma = 1.0

    def reset(self):
        self.S.clear()
        self.Y.clear()

    def compact(self):
        S = np.array(self.S).T
        Y = np.array(self.Y).T
        SY = S.T @ Y
        lower = np.tril(SY, -1)
        W = np.hstack([self.sigma * S, Y])
        middle = np.block([[self.sigma * (S.T @ S), lower], [lower.T, -np.diag(np.diag(SY))]])
        return W, middle

    def times(self, v):
        if not self.S:
            return self.sigma * v
        W, middle = self.compact()
        return self.sigma * v - W @ np.linalg.solve(middle, W.T @ v)

    def prepare(self, al, y, lam_hat, mu_hat, budget):
        pass

    def observe(self, al, step, y_old, y_new, lam_hat, mu_hat):
        sc = al.sc
        w = al.weight
        r = (w * sc.grad(y_new) + sc.jc(y_new).T @ lam_hat + sc.jg(y_new).T @ mu_hat
             - w * sc.grad(y_old) - sc.jc(y_old).T @ lam_hat - sc.jg(y_old).T @ mu_hat)
        if step @ step < 1e-300:
            return
        Bs = self.times(step)
        sBs = step @ Bs
        if not sBs > 0:
            return
        sr = step @ r
        if sr < 0.2 * sBs:
            # Powell damping keeps the model positive definite
            theta = 0.8 * sBs / (sBs - sr)
            r = theta * r + (1 - theta) * Bs
            sr = step @ r
        self.S.append(step)
        self.Y.append(r)
        if len(self.S) > self.size:
            self.S.pop(0)
            self.Y.pop(0)
        self.sigma = float(np.clip((r @ r) / sr, 1e-6, 1e8))

    def direction(self, B, g, rho, room_lo, room_hi):
        """Sparse factorisation of ``sigma I + rho B'B``; the low-rank part
        of the model enters through the Woodbury identity. Active components
        take their diagonally scaled step and are left out of the solve."""
        diag = self.sigma + rho * np.asarray(B.multiply(B).sum(axis=0)).ravel()
        pinned, disp = _active_set(diag, g, room_lo, room_hi)
        out = disp.copy()
        live = np.flatnonzero(~pinned)
        g_full = g
        B = B[:, live]
        g = g[live]
        free = self.movable[live]
        n = free.size
        m = B.shape[0]
        K = sp.identity(n, format="csc") * self.sigma
        if m:
            K = sp.bmat([[K, B.T], [B, sp.identity(m, format="csc") * (-1.0 / rho)]], format="csc")
        try:
            lu = spla.splu(K)
        except RuntimeError:
            return None

        def k0_solve(rhs):
            rhs = rhs.reshape(n, -1)
            return lu.solve(np.vstack([rhs, np.zeros((m, rhs.shape[1]))]))[:n]

        d = k0_solve(-g).ravel()
        if self.S:
            W, middle = self.compact()
            Wf = W[free]
            KW = k0_solve(Wf)
            try:
                d = d + KW @ np.linalg.solve(middle - Wf.T @ KW, Wf.T @ d)
            except np.linalg.LinAlgError:
                return None
        out[live] = d
        if not np.all(np.isfinite(out)) or not g_full @ out < 0:
            return None
        return out


def _structured_inner(al: _AugLag, y, tol, budget: _Budget, state: dict):
    """Projected quasi-Newton on the box. Returns ``(y, stationarity, ok)``."""
    sc = al.sc
    lo, hi = sc.lo, sc.hi
    fixed = lo == hi
    model = state["model"]
    phi = al.value(y)
    gr, obj_grad, lam_hat, mu_hat, Jc, Jg = al.derivatives(y)
    while True:
        opt = _stationarity(y, gr, lo, hi)
        if opt <= tol or not np.isfinite(opt):
            return y, opt, bool(np.isfinite(opt))
        if budget.exhausted() or state.get("done", lambda _: False)(y):
            return y, opt, True
        budget.iterations += 1

        movable = np.flatnonzero(~fixed)
        rows = [Jc]
        on = np.flatnonzero(mu_hat > 0)
        if on.size:
            rows.append(Jg[on])
        B = sp.vstack(rows).tocsc()[:, movable]
        d = np.zeros_like(y)
        if movable.size:
            model.prepare(al, y, lam_hat, mu_hat, budget)
            args = (B, gr[movable], al.rho, (y - lo)[movable], (hi - y)[movable])
            dm = model.direction(*args)
            if dm is None:
                model.reset()
                dm = model.direction(*args)
            if dm is None:
                dm = np.clip(-gr[movable], -(y - lo)[movable], (hi - y)[movable])
            d[movable] = dm
        # trust region on the scaled step keeps Newton-like steps local
        radius = state.setdefault("radius", 0.1)
        size = np.max(np.abs(d), initial=0.0)
        capped = size > radius
        if capped:
            d *= radius / size

        alpha = 1.0
        accepted = False
        for _ in range(60):
            y_new = np.clip(y + alpha * d, lo, hi)
            y_new[fixed] = y[fixed]
            step = y_new - y
            if not np.any(step):
                break
            phi_new = al.value(y_new)
            if np.isfinite(phi_new) and phi_new <= phi + 1e-4 * (gr @ step):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            log.debug("line search failed at inner iteration %d (stationarity %.3e)", budget.iterations, opt)
            return y, opt, False
        if alpha == 1.0 and capped:
            state["radius"] = min(2.0 * radius, 1e3)
        elif alpha < 1.0:
            state["radius"] = max(alpha * min(size, radius), 0.25 * radius, 1e-6)
        model.observe(al, step, y, y_new, lam_hat, mu_hat)
        y, phi = y_new, phi_new
        gr, obj_grad, lam_hat, mu_hat, Jc, Jg = al.derivatives(y)


def _lbfgs_inner(al: _AugLag, y, tol, budget: _Budget, state: dict):
    sc = al.sc

    def fun(yy):
        return al.value(yy), al.derivatives(yy)[0]

    remaining = max(1, min(budget.opts.max_iterations - budget.iterations, budget.opts.inner_iterations))
    res = minimize(fun, y, jac=True, method="L-BFGS-B", bounds=list(zip(sc.lo, sc.hi)),
                   options={"maxiter": remaining, "gtol": tol, "ftol": 1e-15, "maxcor": 20})
    budget.iterations += max(1, int(res.nit))
    y = np.clip(res.x, sc.lo, sc.hi)
    return y, _stationarity(y, al.derivatives(y)[0], sc.lo, sc.hi), True


def _feasibility_phase(sc: _Scaled, y, ctol, budget: _Budget, state: dict, share: float = 0.2):
    """Reduce the constraint violation alone before the objective is switched on.

    A guess whose constraints do not depend on some variable at all (time
    scaling with a motionless state, say) leaves the objective free to drive
    that variable into a degenerate corner; restoring feasibility first
    couples it back in. At most ``share`` of the iteration budget is spent.
    """
    al = _AugLag(sc, np.zeros(sc.p.m_eq), np.zeros(sc.p.m_ineq), 1.0, weight=0.0)
    p = sc.p
    cap = budget.iterations + max(1, int(share * budget.opts.max_iterations))
    state["done"] = lambda yy: p.max_violation(sc.z(yy)) <= ctol or budget.iterations >= cap
    try:
        y, _, _ = _structured_inner(al, y, 0.0, budget, state)
    finally:
        del state["done"]
    state["model"].reset()
    state.pop("radius", None)
    return y


def solve(problem: NlpProblem, guess, options: SolveOptions = SolveOptions()) -> SolveResult:
    """Minimise ``problem`` from ``guess`` (clipped into the bounds first)."""
    budget = _Budget(options)
    z0 = np.asarray(guess, dtype=float)
    if z0.shape != (problem.n,):
        raise ValueError(f"guess has shape {z0.shape}, problem dimension is {problem.n}")
    z0 = np.clip(z0, problem.lower, problem.upper)

    def result(z, status, lam=None, mu=None, outer=0, msg=""):
        z = np.clip(z, problem.lower, problem.upper)
        return SolveResult(
            point=z, status=status, objective=float(problem.objective(z)),
            max_constraint_violation=problem.max_violation(z), iterations=budget.iterations,
            wall_time=budget.elapsed,
            multipliers_eq=np.zeros(problem.m_eq) if lam is None else lam,
            multipliers_ineq=np.zeros(problem.m_ineq) if mu is None else mu,
            outer_iterations=outer, message=msg,
        )

    with np.errstate(all="ignore"):
        try:
            f0 = float(problem.objective(z0))
        except (FloatingPointError, ValueError, ZeroDivisionError):
            f0 = math.nan
    if not np.isfinite(f0):
        return result(z0, SolveStatus.NUMERICAL_FAILURE, msg="objective is not finite at the guess")

    inner = _structured_inner if options.inner == "structured" else _lbfgs_inner
    ctol, otol = options.constraint_tolerance, options.optimality_tolerance
    sc = _Scaled(problem, z0)
    y = z0 / sc.s
    if (problem.element_index is not None and problem.element_gradient is not None
            and _ElementModel.supports(problem.element_index)):
        state = {"model": _ElementModel(problem.element_index, problem.n, options.curvature)}
    else:
        state = {"model": _LbfgsModel(options.memory)}
    state["model"].movable = np.flatnonzero(sc.lo != sc.hi)
    if problem.max_violation(z0) > ctol and options.inner == "structured":
        y = _feasibility_phase(sc, y, ctol, budget, state)
    lam, mu = np.zeros(problem.m_eq), np.zeros(problem.m_ineq)
    rho = options.initial_penalty
    inner_tol = max(otol, 1e-1)
    v_prev = math.inf
    failures = 0
    outer = 0
    while True:
        outer += 1
        al = _AugLag(sc, lam, mu, rho)
        cap = budget.iterations + options.inner_iterations
        state["done"] = lambda _, cap=cap: budget.iterations >= cap
        y, opt, ok = inner(al, y, inner_tol, budget, state)
        del state["done"]
        failures = 0 if ok else failures + 1
        c = sc.c(y)
        g = sc.g(y)
        v = max(np.max(np.abs(c), initial=0.0),
                np.max(np.abs(np.minimum(-g, mu / rho)), initial=0.0))
        lam = np.clip(lam + rho * c, -1e20, 1e20)
        mu = np.clip(mu + rho * g, 0.0, 1e20)
        viol = problem.max_violation(sc.z(y))
        if options.verbose:
            log.info("outer %3d  f=%.6e  viol=%.2e  opt=%.2e  rho=%.1e  it=%d",
                     outer, problem.objective(sc.z(y)), viol, opt, rho, budget.iterations)
        if viol <= ctol and opt <= otol:
            status = SolveStatus.CONVERGED
            break
        if not np.isfinite(v) or not np.isfinite(opt):
            status = SolveStatus.NUMERICAL_FAILURE
            break
        status = budget.exhausted()
        if status is not None:
            break
        if v > 0.25 * v_prev:
            if rho >= options.max_penalty and viol > ctol:
                status = SolveStatus.INFEASIBLE
                break
            rho = min(rho * options.penalty_growth, options.max_penalty)
        if failures > 10:
            status = SolveStatus.INFEASIBLE if viol > ctol else SolveStatus.NUMERICAL_FAILURE
            break
        v_prev = min(v, v_prev)
        if viol <= max(ctol, 1e-2):
            inner_tol = max(otol, 0.1 * inner_tol)
    # multipliers of the unscaled problem
    lam_out = lam * sc.es / sc.fs
    mu_out = mu * sc.is_ / sc.fs
    return result(sc.z(y), status, lam_out, mu_out, outer, f"inner={options.inner}")

"""Reference-path fitting and finite-horizon QP tracking for a planar point-mass UAV."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import Env, Point2, Rect, segment_free

log = logging.getLogger(__name__)


class DegeneratePath(ValueError):
    pass


class MaxIterations(RuntimeError):
    """Solver hit its iteration cap; ``x`` and ``residual`` hold the best iterate."""

    def __init__(self, x: np.ndarray, residual: float, iterations: int):
        self.x = x
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"QP solver stopped after {iterations} iterations, KKT residual {residual:.3e}")


class CollisionInTrack(RuntimeError):
    def __init__(self, report: "TrackReport"):
        self.report = report
        super().__init__(f"tracked trajectory enters an obstacle between steps {report.collision_steps}")


# --------------------------------------------------------------------------
# model

@dataclass(frozen=True)
class LtiModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float = 1.0
    drag: float = 0.2
    mass: float = 1.05
    u_max: float = 10.0
    v_max: float = 15.0

    @classmethod
    def point_mass(cls, dt: float = 1.0, drag: float = 0.2, mass: float = 1.05,
                   u_max: float = 10.0, v_max: float = 15.0) -> "LtiModel":
        """Double integrator with linear drag; state ``[x1, x2, v1, v2]``, input force."""
        I2, Z2 = np.eye(2), np.zeros((2, 2))
        A = np.block([[I2, dt * I2], [Z2, (1.0 - drag) * I2]])
        B = np.vstack([Z2, (dt / mass) * I2])
        C = np.hstack([I2, Z2])
        D = Z2.copy()
        return cls(A, B, C, D, dt, drag, mass, u_max, v_max)

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    def simulate(self, x0: np.ndarray, controls: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Roll the recursion forward: states ``x(0..T)`` and outputs ``y(0..T-1)``."""
        controls = np.asarray(controls, dtype=float).reshape(-1, self.nu)
        T = controls.shape[0]
        xs = np.empty((T + 1, self.nx))
        ys = np.empty((T, self.C.shape[0]))
        xs[0] = x0
        for t in range(T):
            ys[t] = self.C @ xs[t] + self.D @ controls[t]
            xs[t + 1] = self.A @ xs[t] + self.B @ controls[t]
        return xs, ys


# --------------------------------------------------------------------------
# reference path

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)


def _gauss(fun, a: float, b: float) -> float:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.dot(_GL_WEIGHTS, fun(mid + half * _GL_NODES)))


def adaptive_gauss_legendre(fun, a: float, b: float, rtol: float = 1e-4, depth: int = 30) -> float:
    """Integrate a vectorised ``fun`` on [a, b] by recursive bisection of 7-point rules."""
    whole = _gauss(fun, a, b)
    stack = [(a, b, whole, 0)]
    total = 0.0
    while stack:
        lo, hi, est, d = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = _gauss(fun, lo, mid), _gauss(fun, mid, hi)
        if d >= depth or abs(left + right - est) <= rtol * abs(left + right) + 1e-15:
            total += left + right
        else:
            stack.append((lo, mid, left, d + 1))
            stack.append((mid, hi, right, d + 1))
    return total


@dataclass
class ReferencePath:
    control_points: np.ndarray  # (l, 2)
    coeffs: np.ndarray = field(repr=False)  # (segments, 4, 2): a u^3 + b u^2 + c u + d
    seg_lengths: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)  # (T, 2)

    @property
    def total_arc_length(self) -> float:
        return float(self.seg_lengths.sum())

    @property
    def horizon(self) -> int:
        return self.samples.shape[0]

    def evaluate(self, seg: int, u) -> np.ndarray:
        a, b, c, d = self.coeffs[seg]
        u = np.asarray(u, dtype=float)[..., None]
        return ((a * u + b) * u + c) * u + d

    def derivative(self, seg: int, u) -> np.ndarray:
        a, b, c, _ = self.coeffs[seg]
        u = np.asarray(u, dtype=float)[..., None]
        return (3 * a * u + 2 * b) * u + c

    def speed(self, seg: int, u) -> np.ndarray:
        return np.linalg.norm(self.derivative(seg, u), axis=-1)

    def dense(self, n: int = 10_000) -> np.ndarray:
        """``n`` segments' worth of points, uniform in the spline parameter."""
        m = len(self.coeffs)
        g = np.linspace(0.0, m, n + 1)
        seg = np.minimum(g.astype(int), m - 1)
        u = g - seg
        a, b, c, d = (self.coeffs[seg, k] for k in range(4))
        u = u[:, None]
        return ((a * u + b) * u + c) * u + d


def _catmull_rom_coeffs(P: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    # phantom end points by reflection keep the end tangents along the first/last chord
    ext = np.vstack([2 * P[0] - P[1], P, 2 * P[-1] - P[-2]])
    knots = np.zeros(len(ext))
    knots[1:] = np.cumsum(np.linalg.norm(np.diff(ext, axis=0), axis=1) ** alpha)
    out = np.empty((len(P) - 1, 4, 2))
    for i in range(len(P) - 1):
        p0, p1, p2, p3 = ext[i:i + 4]
        t0, t1, t2, t3 = knots[i:i + 4]
        h = t2 - t1
        m1 = h * ((p1 - p0) / (t1 - t0) - (p2 - p0) / (t2 - t0) + (p2 - p1) / (t2 - t1))
        m2 = h * ((p2 - p1) / (t2 - t1) - (p3 - p1) / (t3 - t1) + (p3 - p2) / (t3 - t2))
        # cubic Hermite in power form on u in [0, 1]
        out[i, 0] = 2 * p1 - 2 * p2 + m1 + m2
        out[i, 1] = -3 * p1 + 3 * p2 - 2 * m1 - m2
        out[i, 2] = m1
        out[i, 3] = p1
    return out


def horizon_for(n_points: int) -> int:
    return int(math.ceil(2.5 * n_points - 1e-12))


def fit_reference(path: Sequence, horizon: int | None = None, rtol: float = 1e-4,
                  obstacles=None, max_refine: int = 8) -> ReferencePath:
    """Centripetal Catmull-Rom spline through ``path`` resampled at equal arc length.

    The number of samples defaults to ``ceil(2.5 * len(path))``. With
    ``obstacles`` given, path edges whose spline piece touches an obstacle get
    their midpoint inserted as an extra knot and the spline is refitted; the
    sample count still follows the original point count.
    """
    P = np.asarray([[float(p[0]), float(p[1])] for p in path], dtype=float)
    if len(P) < 2:
        raise DegeneratePath("need at least two points")
    if np.any(np.linalg.norm(np.diff(P, axis=0), axis=1) == 0.0):
        raise DegeneratePath("consecutive points coincide")
    T = horizon_for(len(P)) if horizon is None else int(horizon)
    coeffs = _catmull_rom_coeffs(P)
    if obstacles is not None and len(obstacles):
        for _ in range(max_refine):
            bad = _clipping_pieces(coeffs, obstacles)
            if not bad:
                break
            mids = 0.5 * (P[bad] + P[np.array(bad) + 1])
            P = np.insert(P, np.array(bad) + 1, mids, axis=0)
            coeffs = _catmull_rom_coeffs(P)
    ref = ReferencePath(P, coeffs, np.zeros(len(coeffs)), np.zeros((0, 2)))
    ref.seg_lengths = np.array([adaptive_gauss_legendre(lambda u, k=k: ref.speed(k, u), 0.0, 1.0, rtol)
                                for k in range(len(coeffs))])
    cum = np.concatenate([[0.0], np.cumsum(ref.seg_lengths)])
    total = cum[-1]
    samples = np.empty((T, 2))
    for j in range(T):
        if j == 0:
            samples[j] = P[0]
            continue
        if j == T - 1:
            samples[j] = P[-1]
            continue
        s = total * j / (T - 1)
        k = int(min(np.searchsorted(cum, s, side="right") - 1, len(coeffs) - 1))
        target = s - cum[k]
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if adaptive_gauss_legendre(lambda u, k=k: ref.speed(k, u), 0.0, mid, rtol) < target:
                lo = mid
            else:
                hi = mid
        samples[j] = ref.evaluate(k, 0.5 * (lo + hi))
    ref.samples = samples
    return ref


def _clipping_pieces(coeffs: np.ndarray, obstacles, per_piece: int = 64) -> list[int]:
    from .env import segment_hits

    u = np.linspace(0.0, 1.0, per_piece + 1)[:, None]
    bad = []
    for k, (a, b, c, d) in enumerate(coeffs):
        pts = ((a * u + b) * u + c) * u + d
        if any(segment_hits(pts[i], pts[i + 1], obstacles).any() for i in range(per_piece)):
            bad.append(k)
    return bad


# --------------------------------------------------------------------------
# QP

@dataclass
class CondensedQP:
    """``min 1/2 u'Hu + f'u + const`` s.t. ``lb <= u <= ub`` and ``G u <= h``."""

    H: np.ndarray
    f: np.ndarray
    const: float
    lb: np.ndarray
    ub: np.ndarray
    G: np.ndarray
    h: np.ndarray
    # state prediction x(1..T) = Sx0 + Su u, stacked
    Sx0: np.ndarray | None = field(default=None, repr=False)
    Su: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.H @ u + self.f @ u + self.const)

    def dump_text(self) -> str:
        """Dense text dump of ``H`` and ``f`` (one row per line, repr precision)."""
        lines = [f"# n={self.n}", "H"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.H]
        lines += ["f", " ".join(repr(float(v)) for v in self.f), f"const {self.const!r}"]
        return "\n".join(lines) + "\n"


@dataclass
class MpcProblem:
    model: LtiModel
    x_init: np.ndarray
    reference: np.ndarray  # (T, 2) targets for y(0..T-1)
    Q: np.ndarray = field(default_factory=lambda: 0.9 * np.eye(2))
    R: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(2))
    bounds: Rect | None = None
    # (k, 4) boxes; when given, each output segment is kept on the free side of
    # a separating line that its reference segment already satisfies
    obstacles: np.ndarray | None = None
    corridor_margin: float = 5.0

    @property
    def horizon(self) -> int:
        return self.reference.shape[0]


def separating_halfplane(a, b, box) -> tuple[np.ndarray, float, float]:
    """``(n, c, margin)`` with ``n.p <= c`` for the segment ``ab`` and ``n.p >= c`` on the box.

    Candidates are the four box faces and the segment normal (separating-axis
    theorem for a segment against an axis-aligned box); the one leaving the
    widest gap wins. ``margin`` is negative when the segment touches the box.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    x0, y0, x1, y1 = box
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    cands = [
        (np.array([1.0, 0.0]), x0),
        (np.array([-1.0, 0.0]), -x1),
        (np.array([0.0, 1.0]), y0),
        (np.array([0.0, -1.0]), -y1),
    ]
    d = b - a
    length = float(np.hypot(*d))
    if length > 1e-9:
        nrm = np.array([-d[1], d[0]]) / length
        for sgn in (1.0, -1.0):
            cands.append((sgn * nrm, float(np.min(corners @ (sgn * nrm)))))
    best = None
    for n, c in cands:
        margin = c - max(float(n @ a), float(n @ b))
        if best is None or margin > best[2]:
            best = (n, c, margin)
    return best


def _corridor_rows(problem: MpcProblem, Yfree, Ygain, xT_free, xT_gain):
    """Separating rows ``G u <= h`` for every output segment near an obstacle."""
    boxes = np.asarray(problem.obstacles, dtype=float).reshape(-1, 4)
    ref = problem.reference
    T = len(ref)
    # output polyline y(0..T-1) then the final position, whose target is ref[T-1]
    pts_free = [Yfree[2 * t:2 * t + 2] for t in range(T)] + [xT_free]
    pts_gain = [Ygain[2 * t:2 * t + 2] for t in range(T)] + [xT_gain]
    targets = [ref[t] for t in range(T)] + [ref[T - 1]]
    rows, rhs = [], []
    m = problem.corridor_margin
    for k in range(T):
        a, b = targets[k], targets[k + 1]
        lo = np.minimum(a, b) - m
        hi = np.maximum(a, b) + m
        near = np.flatnonzero((boxes[:, 0] <= hi[0]) & (boxes[:, 2] >= lo[0])
                              & (boxes[:, 1] <= hi[1]) & (boxes[:, 3] >= lo[1]))
        for j in near:
            n, c, margin = separating_halfplane(a, b, boxes[j])
            if margin <= 0:
                continue  # the reference itself touches; nothing consistent to impose
            # stay a hair inside the free side: the boxes are closed sets
            c_eff = c - min(1e-6, 0.5 * margin)
            for idx in (k, k + 1):
                rows.append(n @ pts_gain[idx])
                rhs.append(c_eff - n @ pts_free[idx])
    return rows, rhs


def prediction_matrices(model: LtiModel, x0: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray]:
    """``X = Sx0 + Su U`` with ``X`` the stacked states ``x(1..T)`` and ``U`` the stacked inputs."""
    nx, nu = model.nx, model.nu
    Su = np.zeros((T * nx, T * nu))
    Sx0 = np.zeros(T * nx)
    Apow = [np.eye(nx)]
    for _ in range(T):
        Apow.append(model.A @ Apow[-1])
    AB = [Ap @ model.B for Ap in Apow]
    for t in range(1, T + 1):
        Sx0[(t - 1) * nx:t * nx] = Apow[t] @ x0
        for k in range(t):
            Su[(t - 1) * nx:t * nx, k * nu:(k + 1) * nu] = AB[t - 1 - k]
    return Sx0, Su


def build_qp(problem: MpcProblem) -> CondensedQP:
    """Eliminate the states and return the QP in the stacked controls."""
    m = problem.model
    T = problem.horizon
    nx, nu, ny = m.nx, m.nu, m.C.shape[0]
    x0 = np.asarray(problem.x_init, dtype=float)
    Sx0, Su = prediction_matrices(m, x0, T)

    # outputs y(0..T-1): y(0) from x0, y(t) from x(t) for t >= 1
    Yfree = np.empty(T * ny)
    Ygain = np.zeros((T * ny, T * nu))
    Yfree[:ny] = m.C @ x0
    for t in range(1, T):
        Yfree[t * ny:(t + 1) * ny] = m.C @ Sx0[(t - 1) * nx:t * nx]
        Ygain[t * ny:(t + 1) * ny] = m.C @ Su[(t - 1) * nx:t * nx]
    for t in range(T):
        Ygain[t * ny:(t + 1) * ny, t * nu:(t + 1) * nu] += m.D

    Qbar = np.kron(np.eye(T), problem.Q)
    Rbar = np.kron(np.eye(T), problem.R)
    err0 = Yfree - problem.reference.reshape(-1)
    H = 2.0 * (Ygain.T @ Qbar @ Ygain + Rbar)
    H = 0.5 * (H + H.T)
    f = 2.0 * Ygain.T @ Qbar @ err0
    const = float(err0 @ Qbar @ err0)

    lb = np.full(T * nu, -m.u_max)
    ub = np.full(T * nu, m.u_max)

    rows, rhs = [], []
    vel = [2, 3] if nx == 4 else []
    pos = [0, 1] if nx == 4 else []
    for t in range(1, T + 1):
        base = (t - 1) * nx
        for i in vel:
            g, c = Su[base + i], Sx0[base + i]
            rows += [g, -g]
            rhs += [m.v_max - c, m.v_max + c]
        if problem.bounds is not None:
            b = problem.bounds
            for i, lo, hi in ((pos[0], b.min.x, b.max.x), (pos[1], b.min.y, b.max.y)):
                g, c = Su[base + i], Sx0[base + i]
                rows += [g, -g]
                rhs += [hi - c, -(lo - c)]
    if problem.obstacles is not None and len(problem.obstacles) and nx == 4:
        base = (T - 1) * nx
        c_rows, c_rhs = _corridor_rows(problem, Yfree, Ygain, Sx0[base:base + 2], Su[base:base + 2])
        rows += c_rows
        rhs += c_rhs
    G = np.array(rows) if rows else np.zeros((0, T * nu))
    h = np.array(rhs) if rhs else np.zeros(0)
    # rows with no dependence on u are constants; keep them out of the solver
    keep = np.linalg.norm(G, axis=1) > 1e-12 if len(G) else np.zeros(0, dtype=bool)
    if len(G) and np.any(h[~keep] < -1e-9):
        raise ValueError("initial state violates a state constraint")
    if len(G):  # identical rows arise where consecutive segments share a line
        _, first = np.unique(np.round(np.column_stack([G, h]), 12), axis=0, return_index=True)
        dup = np.ones(len(G), dtype=bool)
        dup[first] = False
        keep &= ~dup
    return CondensedQP(H, f, const, lb, ub, G[keep], h[keep], Sx0, Su)


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    multipliers: np.ndarray  # for G rows
    bound_multipliers: np.ndarray  # signed: >0 upper active, <0 lower active


def kkt_residual(qp: CondensedQP, x: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> float:
    """Largest violation of any KKT condition.

    Stationarity is measured relative to ``1 + max|f|`` so that the number is
    comparable across horizons, whose gradients differ by orders of magnitude.
    """
    grad = qp.H @ x + qp.f + qp.G.T @ mu + nu
    stat = np.max(np.abs(grad), initial=0.0) / (1.0 + np.max(np.abs(qp.f), initial=0.0))
    slack = qp.G @ x - qp.h
    primal = max(np.max(slack, initial=0.0), np.max(qp.lb - x, initial=0.0), np.max(x - qp.ub, initial=0.0))
    dual = max(np.max(-mu, initial=0.0), 0.0)
    nu_up, nu_lo = np.maximum(nu, 0.0), np.maximum(-nu, 0.0)
    comp = max(np.max(np.abs(mu * slack), initial=0.0),
               np.max(np.abs(nu_up * (x - qp.ub)), initial=0.0),
               np.max(np.abs(nu_lo * (qp.lb - x)), initial=0.0))
    return float(max(stat, primal, dual, comp))


def _feasible_start(qp: CondensedQP) -> np.ndarray:
    x = np.clip(np.zeros(qp.n), qp.lb, qp.ub)
    if len(qp.h) == 0 or np.all(qp.G @ x <= qp.h + 1e-12):
        return x
    from scipy.optimize import linprog

    res = linprog(np.zeros(qp.n), A_ub=qp.G, b_ub=qp.h, bounds=list(zip(qp.lb, qp.ub)), method="highs")
    if res.status != 0:
        raise ValueError("QP is infeasible")
    return np.clip(res.x, qp.lb, qp.ub)


def solve_qp(qp: CondensedQP, x0: np.ndarray | None = None, tol: float = 1e-9,
             max_iter: int | None = None) -> QPResult:
    """Primal active-set method from a feasible start.

    Bound constraints are handled by fixing variables; general rows enter the
    working set. Each iteration solves the equality-constrained subproblem on
    the free variables through its KKT system.
    """
    n = qp.n
    G, h = qp.G, qp.h
    x = _feasible_start(qp) if x0 is None else np.array(x0, dtype=float)
    at_lo = np.isclose(x, qp.lb, rtol=0, atol=1e-12)
    at_hi = np.isclose(x, qp.ub, rtol=0, atol=1e-12)
    fixed = at_lo | at_hi
    work: list[int] = [i for i in np.flatnonzero(np.abs(G @ x - h) <= 1e-12)] if len(h) else []
    work = _independent_rows(G, work, fixed)
    max_iter = max_iter or 20 * (n + len(h)) + 100
    scale = 1.0 + np.max(np.abs(qp.f), initial=0.0)

    mu_full = np.zeros(len(h))
    nu_full = np.zeros(n)
    for it in range(1, max_iter + 1):
        g = qp.H @ x + qp.f
        free = ~fixed
        p, mu = _eq_step(qp.H, g, G, work, free)
        if np.max(np.abs(p), initial=0.0) <= tol * (1.0 + np.max(np.abs(x), initial=0.0)):
            # multipliers of fixed bounds from the full gradient
            lagr = g + (G[work].T @ mu if work else 0.0)
            nu = np.zeros(n)
            nu[fixed] = -lagr[fixed]
            mu_full[:] = 0.0
            if work:
                mu_full[work] = mu
            nu_full = nu
            # sign convention: upper-bound multipliers must be >= 0 (nu), lower <= 0
            worst, kind, idx = -tol * scale, None, None
            for j in np.flatnonzero(fixed):
                m_j = nu[j] if at_hi[j] else -nu[j]
                if m_j < worst:
                    worst, kind, idx = m_j, "bound", j
            for k, row in enumerate(work):
                if mu[k] < worst:
                    worst, kind, idx = mu[k], "row", row
            if kind is None:
                res = kkt_residual(qp, x, mu_full, nu_full)
                return QPResult(x, qp.objective(x), res, it, mu_full.copy(), nu_full.copy())
            if kind == "bound":
                fixed[idx] = at_lo[idx] = at_hi[idx] = False
            else:
                work.remove(idx)
            continue

        # ratio test over inactive constraints
        alpha, block = 1.0, None
        free_idx = np.flatnonzero(free)
        pf = p[free_idx]
        up = pf > 1e-15
        if up.any():
            steps = (qp.ub[free_idx][up] - x[free_idx][up]) / pf[up]
            k = int(np.argmin(steps))
            if steps[k] < alpha:
                alpha, block = steps[k], ("hi", int(free_idx[up][k]))
        dn = pf < -1e-15
        if dn.any():
            steps = (qp.lb[free_idx][dn] - x[free_idx][dn]) / pf[dn]
            k = int(np.argmin(steps))
            if steps[k] < alpha:
                alpha, block = steps[k], ("lo", int(free_idx[dn][k]))
        if len(h):
            Gp = G @ p
            inactive = np.ones(len(h), dtype=bool)
            inactive[work] = False
            cand = inactive & (Gp > 1e-12 * (1.0 + np.abs(p).max()))
            if cand.any():
                idxs = np.flatnonzero(cand)
                steps = (h[idxs] - G[idxs] @ x) / Gp[idxs]
                k = int(np.argmin(steps))
                if steps[k] < alpha:
                    alpha, block = max(steps[k], 0.0), ("row", int(idxs[k]))
        x = x + alpha * p
        if block is not None:
            kind, j = block
            if kind == "hi":
                x[j] = qp.ub[j]
                fixed[j] = at_hi[j] = True
            elif kind == "lo":
                x[j] = qp.lb[j]
                fixed[j] = at_lo[j] = True
            else:
                work.append(j)
    res = kkt_residual(qp, x, mu_full, nu_full)
    raise MaxIterations(x, res, max_iter)


def _independent_rows(G: np.ndarray, rows: list[int], fixed: np.ndarray) -> list[int]:
    keep: list[int] = []
    for r in rows:
        trial = keep + [r]
        M = G[trial][:, ~fixed]
        if np.linalg.matrix_rank(M) == len(trial):
            keep = trial
    return keep


def _eq_step(H, g, G, work, free) -> tuple[np.ndarray, np.ndarray]:
    n = len(g)
    fi = np.flatnonzero(free)
    p = np.zeros(n)
    if len(fi) == 0:
        return p, np.zeros(len(work))
    Hff = H[np.ix_(fi, fi)]
    if work:
        A = G[np.ix_(work, fi)]
        m = len(work)
        K = np.zeros((len(fi) + m, len(fi) + m))
        K[: len(fi), : len(fi)] = Hff
        K[: len(fi), len(fi):] = A.T
        K[len(fi):, : len(fi)] = A
        rhs = np.concatenate([-g[fi], np.zeros(m)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p[fi] = sol[: len(fi)]
        return p, sol[len(fi):]
    p[fi] = np.linalg.solve(Hff, -g[fi])
    return p, np.zeros(0)


# --------------------------------------------------------------------------
# solution / pipeline

@dataclass
class MpcSolution:
    controls: np.ndarray  # (T, 2)
    states: np.ndarray  # (T+1, 4)
    outputs: np.ndarray  # (T, 2)
    objective_value: float
    kkt_residual: float
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "controls": self.controls.tolist(),
            "states": self.states.tolist(),
            "outputs": self.outputs.tolist(),
            "objective_value": self.objective_value,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
        }


def solve_mpc(problem: MpcProblem, qp: CondensedQP | None = None) -> MpcSolution:
    qp = qp or build_qp(problem)
    res = solve_qp(qp)
    controls = res.x.reshape(problem.horizon, problem.model.nu)
    states, outputs = problem.model.simulate(problem.x_init, controls)
    return MpcSolution(controls, states, outputs, res.objective, res.kkt_residual, res.iterations)


@dataclass
class TrackReport:
    reference: np.ndarray
    tracking_error: np.ndarray  # ||y(t) - P(t)|| for t = 0..T-1
    endpoint: np.ndarray
    endpoint_goal_distance: float
    collision_steps: list[tuple[int, int]]
    solution: MpcSolution

    @property
    def mean_error(self) -> float:
        return float(self.tracking_error.mean())

    @property
    def max_error(self) -> float:
        return float(self.tracking_error.max())

    @property
    def collision_free(self) -> bool:
        return not self.collision_steps

    def to_dict(self) -> dict:
        d = self.solution.to_dict()
        d.update({
            "reference": self.reference.tolist(),
            "tracking_error": self.tracking_error.tolist(),
            "mean_tracking_error": self.mean_error,
            "max_tracking_error": self.max_error,
            "endpoint": self.endpoint.tolist(),
            "endpoint_goal_distance": self.endpoint_goal_distance,
            "collision_steps": [list(s) for s in self.collision_steps],
        })
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def reference_samples(path: Sequence, obstacles=None) -> np.ndarray:
    """Equal-arc samples of the fitted spline, or a constant reference for a point path."""
    pts = [p for k, p in enumerate(path) if k == 0 or tuple(p) != tuple(path[k - 1])]
    if len(pts) >= 2:
        return fit_reference(pts, horizon=horizon_for(len(path)), obstacles=obstacles).samples
    if not pts:
        raise DegeneratePath("empty path")
    return np.tile(np.asarray(pts[0], dtype=float), (horizon_for(max(len(path), 1)), 1))


def tracking_problem(path_or_plan, env: Env, model: LtiModel | None = None, Q: np.ndarray | None = None,
                     R: np.ndarray | None = None, corridor: bool = True) -> MpcProblem:
    """MPC problem for a planned path: start at rest on its first point.

    With ``corridor`` the QP also carries obstacle separating rows.
    """
    path = getattr(path_or_plan, "path", path_or_plan)
    if getattr(path_or_plan, "status", "Success") != "Success" or not path:
        raise ValueError("tracking needs a successful plan")
    model = model or LtiModel.point_mass()
    ref = reference_samples(path, env.obstacle_array)
    x_init = np.array([path[0][0], path[0][1], 0.0, 0.0])
    return MpcProblem(model, x_init, ref, 0.9 * np.eye(2) if Q is None else Q,
                      0.1 * np.eye(2) if R is None else R, env.bounds,
                      env.obstacle_array if corridor else None)


def track(path_or_plan, env: Env, model: LtiModel | None = None, Q: np.ndarray | None = None,
          R: np.ndarray | None = None, raise_on_collision: bool = True,
          corridor: bool = True) -> TrackReport:
    """Track a planned path and audit the simulated flight.

    ``path_or_plan`` is a point sequence or a successful ``PlanResult``.
    Raises :class:`CollisionInTrack` when the simulated output polyline
    touches an obstacle (unless ``raise_on_collision`` is False).
    """
    problem = tracking_problem(path_or_plan, env, model, Q, R, corridor)
    ref = problem.reference
    try:
        sol = solve_mpc(problem)
    except ValueError:
        if problem.obstacles is None:
            raise
        # the corridor can be dynamically infeasible on very tight paths
        log.warning("obstacle corridor infeasible; tracking without it")
        problem = dataclasses.replace(problem, obstacles=None)
        sol = solve_mpc(problem)
    err = np.linalg.norm(sol.outputs - ref, axis=1)
    endpoint = sol.outputs[-1]
    poly = np.vstack([sol.outputs, sol.states[-1, :2]])
    hits = [(k, k + 1) for k in range(len(poly) - 1)
            if not segment_free(poly[k], poly[k + 1], env.obstacle_array)]
    report = TrackReport(ref, err, endpoint, float(np.linalg.norm(endpoint - np.asarray(env.goal_centroid))),
                         hits, sol)
    if hits and raise_on_collision:
        raise CollisionInTrack(report)
    return report

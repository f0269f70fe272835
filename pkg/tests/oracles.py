"""Slow, obviously-correct reference implementations the tests compare against.

Nothing here imports the code under test's algorithms; each oracle works
from first principles so agreement is evidence, not tautology.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


# --------------------------------------------------------------------------
# geometry

def dense_segment_hits(a, b, boxes, n: int = 10_000) -> bool:
    """Does any of ``n`` evenly spaced points on ``ab`` lie in a closed box?"""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if len(boxes) == 0:
        return False
    t = np.linspace(0.0, 1.0, n)[:, None]
    p = (1 - t) * np.asarray(a, dtype=float) + t * np.asarray(b, dtype=float)
    x, y = p[:, :1], p[:, 1:]
    inside = ((boxes[:, 0] <= x) & (x <= boxes[:, 2]) & (boxes[:, 1] <= y) & (y <= boxes[:, 3]))
    return bool(inside.any())


def exact_segment_hits(a, b, box) -> bool:
    """Exact closed segment vs closed box test in rational arithmetic.

    Separating-axis theorem: the two sets are disjoint iff the bounding boxes
    are disjoint or all four corners lie strictly on one side of the line.
    """
    # float comparisons are exact, so the bounding-box rejection needs no rationals
    if (max(a[0], b[0]) < box[0] or min(a[0], b[0]) > box[2]
            or max(a[1], b[1]) < box[1] or min(a[1], b[1]) > box[3]):
        return False
    ax, ay, bx, by = (Fraction(float(v)) for v in (a[0], a[1], b[0], b[1]))
    x0, y0, x1, y1 = (Fraction(float(v)) for v in box)
    dx, dy = bx - ax, by - ay
    sides = [dx * (cy - ay) - dy * (cx - ax) for cx, cy in ((x0, y0), (x0, y1), (x1, y0), (x1, y1))]
    return not (all(v > 0 for v in sides) or all(v < 0 for v in sides))


def segment_box_distance(a, b, box, n: int = 2001) -> float:
    """Clearance between a segment and a closed box, by fine sampling plus refinement."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    x0, y0, x1, y1 = box

    def dist(t):
        p = a + t * (b - a)
        dx = max(x0 - p[0], 0.0, p[0] - x1)
        dy = max(y0 - p[1], 0.0, p[1] - y1)
        return math.hypot(dx, dy)

    ts = np.linspace(0.0, 1.0, n)
    ds = [dist(t) for t in ts]
    k = int(np.argmin(ds))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, n - 1)]
    for _ in range(100):  # distance is convex in t: ternary search
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if dist(m1) <= dist(m2):
            hi = m2
        else:
            lo = m1
    return min(ds[k], dist(0.5 * (lo + hi)))


def ray_score(env, origin, goal, direction_angle: float, length: float, n: int = 20_001) -> float:
    """Progress of the farthest reachable point along a ray, found by marching."""
    boxes = env.obstacle_array
    b = env.bounds
    ux, uy = math.cos(direction_angle), math.sin(direction_angle)
    ts = np.linspace(0.0, length, n)
    px = origin[0] + ts * ux
    py = origin[1] + ts * uy
    ok = (px >= b.min.x) & (px <= b.max.x) & (py >= b.min.y) & (py <= b.max.y)
    if len(boxes):
        inside = ((boxes[:, 0] <= px[:, None]) & (px[:, None] <= boxes[:, 2])
                  & (boxes[:, 1] <= py[:, None]) & (py[:, None] <= boxes[:, 3])).any(axis=1)
        ok &= ~inside
    bad = np.flatnonzero(~ok)
    last = (bad[0] - 1) if len(bad) else n - 1
    last = max(last, 0)
    far = (px[last], py[last])
    return math.dist(origin, goal) - math.dist(far, goal)


# --------------------------------------------------------------------------
# curves

def polyline_arclength(points: np.ndarray) -> np.ndarray:
    """Cumulative length along a dense polyline."""
    d = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(d)])


def project_arclength(dense: np.ndarray, cum: np.ndarray, p) -> float:
    """Arc-length coordinate of the dense-polyline vertex closest to ``p``."""
    k = int(np.argmin(np.linalg.norm(dense - np.asarray(p), axis=1)))
    return float(cum[k])


# --------------------------------------------------------------------------
# QP

def reference_qp_batch(H, f, lb, ub, G, h, iters: int = 100_000):
    """Dual accelerated projected gradient for a batch of strictly convex QPs.

    ``min 1/2 x'Hx + f'x  s.t.  lb <= x <= ub,  G x <= h`` with every
    constraint dualised: rows ``A = [G; I; -I]``. The dual is maximised by
    FISTA with step ``1/L``, ``L = ||A H^-1 A'||``. Shapes carry a leading
    batch axis. Returns primal points and objective values.
    """
    H = np.asarray(H, dtype=float)
    nb, n, _ = H.shape
    eye = np.broadcast_to(np.eye(n), (nb, n, n))
    A = np.concatenate([G, eye, -eye], axis=1)
    b = np.concatenate([h, ub, -lb], axis=1)
    Hinv = np.linalg.inv(H)
    M = A @ Hinv @ np.swapaxes(A, 1, 2)
    L = np.linalg.norm(M, ord=2, axis=(1, 2))[:, None]
    Hf = np.einsum("bij,bj->bi", Hinv, f)
    AHf = np.einsum("bij,bj->bi", A, Hf)
    lam = np.zeros(b.shape)
    y = lam.copy()
    t = 1.0
    for _ in range(iters):
        # gradient of the (concave) dual at y: A x(y) - b with x(y) = -H^-1 (f + A'y)
        grad = -AHf - np.einsum("bij,bj->bi", M, y) - b
        lam_next = np.maximum(y + grad / L, 0.0)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = lam_next + ((t - 1.0) / t_next) * (lam_next - lam)
        lam, t = lam_next, t_next
    x = -np.einsum("bij,bj->bi", Hinv, f + np.einsum("bji,bj->bi", A, lam))
    obj = 0.5 * np.einsum("bi,bij,bj->b", x, H, x) + np.einsum("bi,bi->b", f, x)
    dual = obj + np.einsum("bi,bi->b", lam, np.einsum("bij,bj->bi", A, x) - b)
    return x, obj, dual

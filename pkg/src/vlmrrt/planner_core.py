"""Search tree with RRT and an RRT* baseline."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import Env, Point2, Rect, ScenarioEvent, goal_reached, point_free, segment_free


class Tree:
    """Vertex store with parent links.

    Vertices live in a growable ``(n, 2)`` array so nearest-neighbour queries
    are a single vectorised scan. Leaves are tracked incrementally.
    """

    def __init__(self, root, capacity: int = 256):
        self._xy = np.empty((max(capacity, 1), 2))
        self._xy[0] = (float(root[0]), float(root[1]))
        self._n = 1
        self.parent: list[int | None] = [None]
        self.cost: list[float] = [0.0]
        self.children: list[list[int]] = [[]]
        # every (parent, child) edge ever created, in creation order
        self.edge_log: list[tuple[int, int]] = []
        self._leaves: list[int] = [0]
        self._leaf_pos: dict[int, int] = {0: 0}

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._xy[: self._n]

    def vertex(self, i: int) -> Point2:
        return Point2(float(self._xy[i, 0]), float(self._xy[i, 1]))

    def leaves(self) -> list[int]:
        return sorted(self._leaves)

    @property
    def leaf_list(self) -> list[int]:
        """Leaves in internal order (stable for a fixed insertion history)."""
        return self._leaves

    def _drop_leaf(self, i: int) -> None:
        pos = self._leaf_pos.pop(i, None)
        if pos is None:
            return
        last = self._leaves.pop()
        if last != i:
            self._leaves[pos] = last
            self._leaf_pos[last] = pos

    def _add_leaf(self, i: int) -> None:
        if i not in self._leaf_pos:
            self._leaf_pos[i] = len(self._leaves)
            self._leaves.append(i)

    def add(self, p, parent: int) -> int:
        if self._n == self._xy.shape[0]:
            grown = np.empty((2 * self._xy.shape[0], 2))
            grown[: self._n] = self._xy[: self._n]
            self._xy = grown
        i = self._n
        self._xy[i] = (float(p[0]), float(p[1]))
        self._n += 1
        self.parent.append(parent)
        self.cost.append(self.cost[parent] + math.dist(self._xy[parent], self._xy[i]))
        self.children.append([])
        self.children[parent].append(i)
        self.edge_log.append((parent, i))
        self._drop_leaf(parent)
        self._add_leaf(i)
        return i

    def reparent(self, i: int, new_parent: int) -> None:
        old = self.parent[i]
        if old is not None:
            self.children[old].remove(i)
            if not self.children[old]:
                self._add_leaf(old)
        self.parent[i] = new_parent
        self.children[new_parent].append(i)
        self._drop_leaf(new_parent)
        self.edge_log.append((new_parent, i))
        delta = self.cost[new_parent] + math.dist(self._xy[new_parent], self._xy[i]) - self.cost[i]
        stack = [i]
        while stack:
            k = stack.pop()
            self.cost[k] += delta
            stack.extend(self.children[k])

    def recompute_costs(self) -> list[float]:
        """Costs recomputed from parent links alone (for consistency checks)."""
        out = [0.0] * self._n
        for i in range(1, self._n):
            chain = []
            k = i
            while k is not None:
                chain.append(k)
                k = self.parent[k]
            total = 0.0
            for a, b in zip(chain[1:], chain[:-1]):
                total += math.dist(self._xy[a], self._xy[b])
            out[i] = total
        return out


# --------------------------------------------------------------------------

STRICT_BALL = "strict_ball"
BALL_OR_RECT = "ball_or_rect"


@dataclass(frozen=True)
class PlannerConfig:
    delta: float = 15.0
    epsilon: float = 1.0
    max_iterations: int = 500
    gamma: float = 0.85
    sector_radius: float = 30.0
    sector_aperture: float = 45.0  # degrees, full width
    rng_seed: int = 0
    rewire_radius: float = 40.0
    goal_mode: str = STRICT_BALL
    # RRT* keeps iterating to max_iterations and returns the cheapest goal vertex
    star_anytime: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.delta <= 0 or self.epsilon <= 0:
            raise ValueError("delta and epsilon must be positive")
        if not 0.0 < self.sector_aperture <= 360.0:
            raise ValueError("sector_aperture must lie in (0, 360]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.goal_mode not in (STRICT_BALL, BALL_OR_RECT):
            raise ValueError(f"unknown goal_mode {self.goal_mode!r}")


SUCCESS = "Success"
ITERATION_LIMIT = "IterationLimit"


@dataclass
class PlanResult:
    status: str
    path: list[Point2]
    iterations_used: int
    tree_size: int
    vlm_queries: int = 0
    wall_time: float = field(default=0.0, compare=False)
    tree: Tree | None = field(default=None, repr=False, compare=False)

    @property
    def success(self) -> bool:
        return self.status == SUCCESS

    @property
    def path_length(self) -> float:
        return float(sum(math.dist(a, b) for a, b in zip(self.path[:-1], self.path[1:])))

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "path": [[p.x, p.y] for p in self.path],
            "iterations_used": self.iterations_used,
            "tree_size": self.tree_size,
            "vlm_queries": self.vlm_queries,
            "wall_time": self.wall_time,
            "path_length": self.path_length if self.success else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PlanResult":
        if d.get("status") not in (SUCCESS, ITERATION_LIMIT):
            raise ValueError(f"bad status {d.get('status')!r}")
        return cls(d["status"], [Point2(float(x), float(y)) for x, y in d["path"]],
                   int(d["iterations_used"]), int(d["tree_size"]),
                   int(d.get("vlm_queries", 0)), float(d.get("wall_time", 0.0)))

    @classmethod
    def from_json(cls, text: str | bytes) -> "PlanResult":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# primitives

def sample_state(rng, bounds: Rect) -> Point2:
    """Uniform sample over ``bounds``; x is drawn before y."""
    u = rng.random()
    v = rng.random()
    return Point2(bounds.min.x + u * (bounds.max.x - bounds.min.x),
                  bounds.min.y + v * (bounds.max.y - bounds.min.y))


def nearest_neighbor(tree: Tree, q) -> int:
    pts = tree.points
    d2 = (pts[:, 0] - q[0]) ** 2 + (pts[:, 1] - q[1]) ** 2
    return int(np.argmin(d2))  # argmin returns the first minimiser


def steer(nearest, rand, delta: float) -> Point2:
    if delta <= 0:
        raise ValueError("delta must be positive")
    dx, dy = rand[0] - nearest[0], rand[1] - nearest[1]
    dist = math.hypot(dx, dy)
    if dist <= delta:
        return Point2(float(rand[0]), float(rand[1]))
    s = delta / dist
    p = Point2(nearest[0] + s * dx, nearest[1] + s * dy)
    while math.dist(nearest, p) > delta:  # rounding can overshoot by an ulp
        s = math.nextafter(s, 0.0)
        p = Point2(nearest[0] + s * dx, nearest[1] + s * dy)
    return p


def retrieve_plan(tree: Tree, terminal: int) -> list[Point2]:
    out = []
    k: int | None = terminal
    while k is not None:
        out.append(tree.vertex(k))
        k = tree.parent[k]
    out.reverse()
    return out


def planner_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent RNG streams: uniform sampling, and everything oracle-related.

    Keeping them separate means a γ=0 VLM-RRT run consumes exactly the
    uniform stream plain RRT does.
    """
    ss = np.random.SeedSequence(int(seed))
    uniform, guided = ss.spawn(2)
    return np.random.default_rng(uniform), np.random.default_rng(guided)


# --------------------------------------------------------------------------
# RRT

def apply_events(env: Env, schedule: list[ScenarioEvent], iteration: int) -> tuple[Env, bool]:
    """Pop every event due at or before ``iteration`` and move the goal."""
    moved = False
    while schedule and schedule[0].at_iteration <= iteration:
        env = env.with_goal(schedule.pop(0).new_goal)
        moved = True
    return env, moved


def plan_rrt(env: Env, cfg: PlannerConfig, events: Sequence[ScenarioEvent] | None = None,
             keep_tree: bool = True) -> PlanResult:
    """Plain RRT.

    Every loop pass counts as an iteration whether or not the extension was
    collision free. Only inserted vertices are goal-tested. ``events`` relocate
    the goal before the iteration they name; with ``keep_tree=False`` the tree
    is reset to the root at each relocation.
    """
    t0 = time.perf_counter()
    root = env.start_point
    if not point_free(root, env.obstacle_array):
        raise ValueError("start point is inside an obstacle")
    rng, _ = planner_streams(cfg.rng_seed)
    boxes = env.obstacle_array
    schedule = sorted(events or (), key=lambda e: e.at_iteration)
    tree = Tree(root, capacity=cfg.max_iterations + 1)
    i = 0
    while i < cfg.max_iterations:
        env, moved = apply_events(env, schedule, i + 1)
        if moved and not keep_tree:
            tree = Tree(root, capacity=cfg.max_iterations + 1)
        rand = sample_state(rng, env.bounds)
        nearest = nearest_neighbor(tree, rand)
        near_pt = tree.vertex(nearest)
        new = steer(near_pt, rand, cfg.delta)
        i += 1
        if segment_free(near_pt, new, boxes):
            v = tree.add(new, nearest)
            if goal_reached(new, env, cfg.epsilon, cfg.goal_mode):
                return PlanResult(SUCCESS, retrieve_plan(tree, v), i, len(tree), 0,
                                  time.perf_counter() - t0, tree)
    return PlanResult(ITERATION_LIMIT, [], i, len(tree), 0, time.perf_counter() - t0, tree)


def plan_rrt_star(env: Env, cfg: PlannerConfig) -> PlanResult:
    """RRT* with a fixed rewiring radius.

    Same sampling stream and iteration accounting as :func:`plan_rrt`. By
    default it returns at the first goal hit; ``cfg.star_anytime`` keeps
    refining until the iteration cap and returns the cheapest goal vertex.
    """
    t0 = time.perf_counter()
    root = env.start_point
    if not point_free(root, env.obstacle_array):
        raise ValueError("start point is inside an obstacle")
    rng, _ = planner_streams(cfg.rng_seed)
    boxes = env.obstacle_array
    tree = Tree(root, capacity=cfg.max_iterations + 1)
    r2 = cfg.rewire_radius ** 2
    goal_vertices: list[int] = []
    i = 0
    while i < cfg.max_iterations:
        rand = sample_state(rng, env.bounds)
        nearest = nearest_neighbor(tree, rand)
        new = steer(tree.vertex(nearest), rand, cfg.delta)
        i += 1
        if not segment_free(tree.vertex(nearest), new, boxes):
            continue
        pts = tree.points
        d2 = (pts[:, 0] - new[0]) ** 2 + (pts[:, 1] - new[1]) ** 2
        near = np.flatnonzero(d2 <= r2)
        dist = np.sqrt(d2)
        best, best_cost = nearest, tree.cost[nearest] + float(dist[nearest])
        for k in near:
            k = int(k)
            c = tree.cost[k] + float(dist[k])
            if c < best_cost and k != nearest and segment_free(tree.vertex(k), new, boxes):
                best, best_cost = k, c
        v = tree.add(new, best)
        for k in near:
            k = int(k)
            if k == best:
                continue
            c = tree.cost[v] + float(dist[k])
            if c < tree.cost[k] and segment_free(new, tree.vertex(k), boxes):
                tree.reparent(k, v)
        if goal_reached(new, env, cfg.epsilon, cfg.goal_mode):
            goal_vertices.append(v)
            if not cfg.star_anytime:
                break
    if goal_vertices:
        term = min(goal_vertices, key=lambda k: (tree.cost[k], k))
        path = retrieve_plan(tree, term)
        status = SUCCESS
    else:
        path, status = [], ITERATION_LIMIT
    return PlanResult(status, path, i, len(tree), 0, time.perf_counter() - t0, tree)

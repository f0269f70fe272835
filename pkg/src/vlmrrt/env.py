"""Planar world model: rectangle geometry plus random and file-based scenarios."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed scenario document."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InfeasibleScenario(RuntimeError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


def as_point(p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite point {p!r}")
    return Point2(x, y)


@dataclass(frozen=True)
class Rect:
    min: Point2
    max: Point2

    def __post_init__(self):
        object.__setattr__(self, "min", as_point(self.min))
        object.__setattr__(self, "max", as_point(self.max))
        if self.min.x > self.max.x or self.min.y > self.max.y:
            raise ValueError(f"inverted rectangle {self.as_list()}")

    @classmethod
    def from_list(cls, v: Sequence[float]) -> "Rect":
        return cls(Point2(v[0], v[1]), Point2(v[2], v[3]))

    def as_list(self) -> list[float]:
        return [self.min.x, self.min.y, self.max.x, self.max.y]

    @property
    def width(self) -> float:
        return self.max.x - self.min.x

    @property
    def height(self) -> float:
        return self.max.y - self.min.y

    @property
    def centroid(self) -> Point2:
        return Point2(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))

    def contains_rect(self, other: "Rect") -> bool:
        return (self.min.x <= other.min.x and self.min.y <= other.min.y
                and other.max.x <= self.max.x and other.max.y <= self.max.y)

    def intersects(self, other: "Rect") -> bool:
        # closed sets: shared boundary counts
        return not (other.min.x > self.max.x or other.max.x < self.min.x
                    or other.min.y > self.max.y or other.max.y < self.min.y)


def point_in_rect(p, r: Rect) -> bool:
    return r.min.x <= p[0] <= r.max.x and r.min.y <= p[1] <= r.max.y


def rect_array(rects: Sequence[Rect]) -> np.ndarray:
    """Stack rectangles into an ``(n, 4)`` array of ``[min_x, min_y, max_x, max_y]``."""
    if len(rects) == 0:
        return np.zeros((0, 4))
    return np.array([r.as_list() for r in rects], dtype=float)


def _as_obstacle_array(obstacles) -> np.ndarray:
    if isinstance(obstacles, np.ndarray):
        return obstacles
    return rect_array(list(obstacles))


def _clip(a, b, boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Liang-Barsky against every box at once: (hit mask, entry parameter)
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    t0 = np.zeros(boxes.shape[0])
    t1 = np.ones(boxes.shape[0])
    hit = np.ones(boxes.shape[0], dtype=bool)
    for origin, d, lo, hi in ((ax, dx, boxes[:, 0], boxes[:, 2]), (ay, dy, boxes[:, 1], boxes[:, 3])):
        if d == 0.0:
            hit &= (lo <= origin) & (origin <= hi)
        else:
            ta = (lo - origin) / d
            tb = (hi - origin) / d
            t0 = np.maximum(t0, np.minimum(ta, tb))
            t1 = np.minimum(t1, np.maximum(ta, tb))
    return hit & (t0 <= t1), t0


def segment_hits(a, b, obstacles) -> np.ndarray:
    """Boolean mask of obstacles hit by the closed segment ``ab``.

    Exact parametric clipping; rectangles are closed, so grazing a boundary
    or a corner is a hit.
    """
    boxes = _as_obstacle_array(obstacles)
    if boxes.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return _clip(a, b, boxes)[0]


def segment_entry(a, b, obstacles) -> float:
    """Smallest parameter ``t`` in [0, 1] at which ``ab`` touches an obstacle, or inf."""
    boxes = _as_obstacle_array(obstacles)
    if boxes.shape[0] == 0:
        return math.inf
    hit, t0 = _clip(a, b, boxes)
    return float(t0[hit].min()) if hit.any() else math.inf


def segment_free(a, b, obstacles) -> bool:
    return not segment_hits(a, b, obstacles).any()


def point_free(p, obstacles) -> bool:
    boxes = _as_obstacle_array(obstacles)
    if boxes.shape[0] == 0:
        return True
    x, y = float(p[0]), float(p[1])
    inside = (boxes[:, 0] <= x) & (x <= boxes[:, 2]) & (boxes[:, 1] <= y) & (y <= boxes[:, 3])
    return not inside.any()


@dataclass(frozen=True)
class Env:
    bounds: Rect
    start: Rect
    goal: Rect
    obstacles: tuple[Rect, ...] = ()
    goal_centroid: Point2 = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        centroid = self.goal.centroid
        if self.goal_centroid is None:
            object.__setattr__(self, "goal_centroid", centroid)
        elif math.dist(self.goal_centroid, centroid) > 1e-9:
            raise ValueError("goal_centroid must be the centroid of goal")
        object.__setattr__(self, "_boxes", rect_array(self.obstacles))

    @property
    def obstacle_array(self) -> np.ndarray:
        return self._boxes  # type: ignore[attr-defined]

    @property
    def start_point(self) -> Point2:
        return self.start.centroid

    def with_goal(self, goal: Rect) -> "Env":
        return Env(self.bounds, self.start, goal, self.obstacles)

    def validate(self) -> None:
        """Raise ``ValueError`` if any structural invariant is broken."""
        for name, r in (("start", self.start), ("goal", self.goal)):
            if r.width <= 0 or r.height <= 0:
                raise ValueError(f"{name} rectangle is degenerate")
            if not self.bounds.contains_rect(r):
                raise ValueError(f"{name} lies outside bounds")
        if self.bounds.width <= 0 or self.bounds.height <= 0:
            raise ValueError("bounds rectangle is degenerate")
        if self.start.intersects(self.goal):
            raise ValueError("start and goal overlap")
        for i, o in enumerate(self.obstacles):
            if o.width <= 0 or o.height <= 0:
                raise ValueError(f"obstacle {i} is degenerate")
            if not self.bounds.contains_rect(o):
                raise ValueError(f"obstacle {i} lies outside bounds")
            if o.intersects(self.start) or o.intersects(self.goal):
                raise ValueError(f"obstacle {i} overlaps start or goal")


def goal_reached(p, env: Env, epsilon: float, mode: str = "strict_ball") -> bool:
    """Goal test: ε-ball around the goal centroid, optionally relaxed to the goal rectangle."""
    if math.hypot(p[0] - env.goal_centroid.x, p[1] - env.goal_centroid.y) <= epsilon:
        return True
    if mode == "ball_or_rect":
        return point_in_rect(p, env.goal)
    if mode != "strict_ball":
        raise ValueError(f"unknown goal mode {mode!r}")
    return False


@dataclass(frozen=True)
class ScenarioEvent:
    at_iteration: int
    new_goal: Rect


@dataclass(frozen=True)
class Scenario:
    env: Env
    events: tuple[ScenarioEvent, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def validate(self) -> None:
        self.env.validate()
        last = 0
        for k, ev in enumerate(self.events):
            if ev.at_iteration < 1:
                raise ValueError(f"event {k}: at_iteration must be >= 1")
            if ev.at_iteration <= last:
                raise ValueError(f"event {k}: events must be strictly increasing in at_iteration")
            last = ev.at_iteration
            if not self.env.bounds.contains_rect(ev.new_goal):
                raise ValueError(f"event {k}: new_goal outside bounds")
            if any(o.intersects(ev.new_goal) for o in self.env.obstacles):
                raise ValueError(f"event {k}: new_goal overlaps an obstacle")


# --------------------------------------------------------------------------
# feasibility

def grid_path_exists(env: Env, resolution: float = 5.0, goal: Rect | None = None) -> bool:
    """Coarse 4-connected BFS on an occupancy grid from start to goal.

    A cell is blocked when its closed square touches any obstacle, so a
    ``True`` answer is conservative.
    """
    goal = goal or env.goal
    b = env.bounds
    nx = max(1, int(math.ceil(b.width / resolution)))
    ny = max(1, int(math.ceil(b.height / resolution)))
    xs = b.min.x + resolution * np.arange(nx)
    ys = b.min.y + resolution * np.arange(ny)
    x0, x1 = xs[:, None], np.minimum(xs + resolution, b.max.x)[:, None]
    y0, y1 = ys[None, :], np.minimum(ys + resolution, b.max.y)[None, :]
    blocked = np.zeros((nx, ny), dtype=bool)
    for o in env.obstacles:
        blocked |= ~((o.min.x > x1) | (o.max.x < x0) | (o.min.y > y1) | (o.max.y < y0))

    def cells_of(r: Rect):
        return (~((r.min.x > x1) | (r.max.x < x0) | (r.min.y > y1) | (r.max.y < y0))) & ~blocked

    sources = np.argwhere(cells_of(env.start))
    targets = cells_of(goal)
    if sources.size == 0 or not targets.any():
        return False
    seen = np.zeros_like(blocked)
    queue = deque()
    for i, j in sources:
        seen[i, j] = True
        queue.append((i, j))
    while queue:
        i, j = queue.popleft()
        if targets[i, j]:
            return True
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            u, v = i + di, j + dj
            if 0 <= u < nx and 0 <= v < ny and not seen[u, v] and not blocked[u, v]:
                seen[u, v] = True
                queue.append((u, v))
    return False


# --------------------------------------------------------------------------
# random generation

@dataclass(frozen=True)
class ScenarioParams:
    """Distribution of randomly generated worlds (tunable, not measured values)."""

    obstacle_side: tuple[float, float] = (20.0, 80.0)
    region_side: tuple[float, float] = (10.0, 30.0)
    start_goal_distance: tuple[float, float] = (40.0, 80.0)
    # fraction of obstacles centred near the start-goal midpoint, the rest anywhere
    local_fraction: float = 0.0
    local_radius: float = 60.0
    # probability that a world gets a cup (three bars opening toward the start)
    # across the direct start-goal line; its bars count toward n_obstacles
    trap_fraction: float = 0.3
    cup_half_width: tuple[float, float] = (20.0, 40.0)
    cup_depth: tuple[float, float] = (20.0, 40.0)
    cup_thickness: tuple[float, float] = (4.0, 8.0)
    grid_resolution: float = 5.0
    max_attempts: int = 100


DEFAULT_BOUNDS = Rect(Point2(0.0, 0.0), Point2(500.0, 500.0))


def _random_rect(rng: np.random.Generator, bounds: Rect, side: tuple[float, float]) -> Rect:
    w, h = rng.uniform(side[0], side[1], size=2)
    w = min(w, bounds.width)
    h = min(h, bounds.height)
    x = rng.uniform(bounds.min.x, bounds.max.x - w)
    y = rng.uniform(bounds.min.y, bounds.max.y - h)
    return Rect(Point2(x, y), Point2(x + w, y + h))


def _rect_around(rng, bounds: Rect, centre, radius: float, side: tuple[float, float]) -> Rect | None:
    w, h = rng.uniform(side[0], side[1], size=2)
    rho = radius * math.sqrt(rng.random())
    phi = rng.uniform(-math.pi, math.pi)
    cx, cy = centre[0] + rho * math.cos(phi), centre[1] + rho * math.sin(phi)
    r = Rect(Point2(cx - w / 2, cy - h / 2), Point2(cx + w / 2, cy + h / 2))
    return r if bounds.contains_rect(r) else None


def _cup(rng, start: Rect, goal: Rect, params: ScenarioParams) -> list[Rect] | None:
    """Bars forming a cup whose bottom sits just in front of the goal."""
    s, g = start.centroid, goal.centroid
    dx, dy = g.x - s.x, g.y - s.y
    horizontal = abs(dx) >= abs(dy)
    # work in (a, b) = (along, across) coordinates with the goal at larger a
    sign = (1.0 if dx >= 0 else -1.0) if horizontal else (1.0 if dy >= 0 else -1.0)
    if horizontal:
        g_near = goal.min.x if sign > 0 else -goal.max.x
        s_far = start.max.x if sign > 0 else -start.min.x
        across = g.y
    else:
        g_near = goal.min.y if sign > 0 else -goal.max.y
        s_far = start.max.y if sign > 0 else -start.min.y
        across = g.x
    t = rng.uniform(*params.cup_thickness)
    half = rng.uniform(*params.cup_half_width)
    depth = rng.uniform(*params.cup_depth)
    a1 = g_near - rng.uniform(2.0, 6.0)  # outer face of the bottom bar
    a0 = a1 - t
    if a0 - s_far < 8.0:
        return None
    arm0 = max(a1 - depth, s_far + 2.0)
    pieces = [(a0, a1, across - half - t, across + half + t),
              (arm0, a1, across - half - t, across - half),
              (arm0, a1, across + half, across + half + t)]
    out = []
    for lo_a, hi_a, lo_b, hi_b in pieces:
        lo_a, hi_a = (lo_a, hi_a) if sign > 0 else (-hi_a, -lo_a)
        if horizontal:
            out.append(Rect(Point2(lo_a, lo_b), Point2(hi_a, hi_b)))
        else:
            out.append(Rect(Point2(lo_b, lo_a), Point2(hi_b, hi_a)))
    return out


def _attempt(rng, n_obstacles, bounds, params: ScenarioParams) -> Env | None:
    start = _random_rect(rng, bounds, params.region_side)
    lo, hi = params.start_goal_distance
    for _ in range(200):
        # goal centroid at a random bearing and separation from the start centroid
        w, h = rng.uniform(params.region_side[0], params.region_side[1], size=2)
        sep = rng.uniform(lo, hi)
        phi = rng.uniform(-math.pi, math.pi)
        cx = start.centroid.x + sep * math.cos(phi)
        cy = start.centroid.y + sep * math.sin(phi)
        goal = Rect(Point2(cx - w / 2, cy - h / 2), Point2(cx + w / 2, cy + h / 2))
        if bounds.contains_rect(goal) and not goal.intersects(start):
            break
    else:
        return None
    mid = Point2(0.5 * (start.centroid.x + goal.centroid.x), 0.5 * (start.centroid.y + goal.centroid.y))
    n_local = int(round(params.local_fraction * n_obstacles))
    obstacles: list[Rect] = []
    if params.trap_fraction > 0 and rng.random() < params.trap_fraction:
        cup = _cup(rng, start, goal, params)
        if cup is None or any(not bounds.contains_rect(o) or o.intersects(start) or o.intersects(goal)
                              for o in cup):
            return None
        obstacles += cup[:n_obstacles]
    tries = placed_local = 0
    while len(obstacles) < n_obstacles and tries < 50 * (n_obstacles + 1):
        tries += 1
        if placed_local < n_local:
            o = _rect_around(rng, bounds, mid, params.local_radius, params.obstacle_side)
            if o is None:
                continue
        else:
            o = _random_rect(rng, bounds, params.obstacle_side)
        if not (o.intersects(start) or o.intersects(goal)):
            obstacles.append(o)
            placed_local += placed_local < n_local
    if len(obstacles) < n_obstacles:
        return None
    env = Env(bounds, start, goal, tuple(obstacles))
    if not grid_path_exists(env, params.grid_resolution):
        return None
    return env


def random_scenario(seed: int, n_obstacles: int, bounds: Rect = DEFAULT_BOUNDS,
                    params: ScenarioParams = ScenarioParams()) -> Scenario:
    """Deterministic random world whose start and goal are grid-connected.

    Each retry draws from an independent sub-stream ``(seed, attempt)``.
    """
    if n_obstacles < 0:
        raise ValueError("n_obstacles must be >= 0")
    if bounds.width <= 0 or bounds.height <= 0:
        raise ValueError("bounds must be nondegenerate")
    for attempt in range(params.max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(attempt,)))
        env = _attempt(rng, n_obstacles, bounds, params)
        if env is not None:
            return Scenario(env, (), int(seed))
    raise InfeasibleScenario(f"no feasible scenario for seed={seed} after {params.max_attempts} attempts")


def random_relocations(scenario: Scenario, n_events: int, first_at: int = 20, spacing: int = 20,
                       params: ScenarioParams = ScenarioParams()) -> Scenario:
    """Attach ``n_events`` goal relocations, each reachable from the start."""
    env = scenario.env
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(scenario.seed), spawn_key=(10_000,)))
    events = []
    for k in range(n_events):
        for _ in range(500):
            g = _random_rect(rng, env.bounds, params.region_side)
            if g.intersects(env.start) or any(o.intersects(g) for o in env.obstacles):
                continue
            if grid_path_exists(env, params.grid_resolution, goal=g):
                events.append(ScenarioEvent(first_at + k * spacing, g))
                break
        else:
            raise InfeasibleScenario("could not place a relocated goal")
    return Scenario(env, tuple(events), scenario.seed)


# --------------------------------------------------------------------------
# persistence

_TOP_KEYS = {"bounds", "start", "goal", "obstacles", "events", "seed"}
_EVENT_KEYS = {"at_iteration", "new_goal"}


def _line_of(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _parse_rect(value, name: str, text: str) -> Rect:
    line = _line_of(text, f'"{name.split("[")[0].split(".")[-1]}"')
    if not (isinstance(value, list) and len(value) == 4
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ParseError("expected [min_x, min_y, max_x, max_y]", line, name)
    try:
        r = Rect.from_list(value)
    except ValueError as exc:
        raise ParseError(str(exc), line, name) from None
    if r.width <= 0 or r.height <= 0:
        raise ParseError("rectangle has zero width or height", line, name)
    return r


def save_scenario(scenario: Scenario) -> bytes:
    env = scenario.env
    doc = {
        "bounds": env.bounds.as_list(),
        "start": env.start.as_list(),
        "goal": env.goal.as_list(),
        "obstacles": [o.as_list() for o in env.obstacles],
        "events": [{"at_iteration": e.at_iteration, "new_goal": e.new_goal.as_list()}
                   for e in scenario.events],
        "seed": int(scenario.seed),
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def load_scenario(data: bytes | str) -> Scenario:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", 1)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ParseError("unknown key", _line_of(text, f'"{key}"'), key)
    missing = {"bounds", "start", "goal"} - set(doc)
    if missing:
        raise ParseError("missing required key", None, sorted(missing)[0])

    bounds = _parse_rect(doc["bounds"], "bounds", text)
    start = _parse_rect(doc["start"], "start", text)
    goal = _parse_rect(doc["goal"], "goal", text)
    obstacles_raw = doc.get("obstacles", [])
    if not isinstance(obstacles_raw, list):
        raise ParseError("expected an array", _line_of(text, '"obstacles"'), "obstacles")
    obstacles = tuple(_parse_rect(o, f"obstacles[{i}]", text) for i, o in enumerate(obstacles_raw))

    events = []
    events_raw = doc.get("events", [])
    if not isinstance(events_raw, list):
        raise ParseError("expected an array", _line_of(text, '"events"'), "events")
    for i, ev in enumerate(events_raw):
        name = f"events[{i}]"
        if not isinstance(ev, dict):
            raise ParseError("expected an object", _line_of(text, '"events"'), name)
        extra = set(ev) - _EVENT_KEYS
        if extra:
            raise ParseError("unknown key", _line_of(text, f'"{sorted(extra)[0]}"'), f"{name}.{sorted(extra)[0]}")
        at = ev.get("at_iteration")
        if not isinstance(at, int) or isinstance(at, bool):
            raise ParseError("at_iteration must be an integer", _line_of(text, '"at_iteration"'),
                             f"{name}.at_iteration")
        if "new_goal" not in ev:
            raise ParseError("missing new_goal", None, f"{name}.new_goal")
        events.append(ScenarioEvent(at, _parse_rect(ev["new_goal"], f"{name}.new_goal", text)))

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ParseError("seed must be an unsigned 64-bit integer", _line_of(text, '"seed"'), "seed")

    scenario = Scenario(Env(bounds, start, goal, obstacles), tuple(events), seed)
    try:
        scenario.validate()
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return scenario

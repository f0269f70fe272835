"""RRT whose sampler, with probability gamma, draws from an oracle-chosen sector."""

from __future__ import annotations

import logging
import math
import time
from typing import Callable, Sequence

from .env import Env, Point2, ScenarioEvent, goal_reached, point_free, segment_free
from .oracle.base import DirectionOracle, OracleAnswer, OracleError, OracleQuery
from .planner_core import (ITERATION_LIMIT, SUCCESS, PlannerConfig, PlanResult, Tree,
                           apply_events, nearest_neighbor, planner_streams, retrieve_plan,
                           sample_state, steer)
from .sector import CompassDirection, Sector, sample_sector

__all__ = ["CompassDirection", "Sector", "pick_leaf_node", "sample_state_vlm", "plan_vlm_rrt"]

log = logging.getLogger(__name__)

AnswerHook = Callable[[int, Env, Point2, "OracleAnswer | None"], None]


def pick_leaf_node(tree: Tree, rng) -> int:
    leaves = tree.leaf_list
    return leaves[int(rng.integers(len(leaves)))]


def sample_state_vlm(apex, d: CompassDirection | float, r: float, theta: float, env: Env,
                     rng) -> tuple[Point2, bool]:
    """Uniform point in the sector (apex, d, r, theta) clipped to the world.

    ``theta`` is the full aperture in radians. Returns ``(point, fallback)``.
    """
    heading = d.angle if isinstance(d, CompassDirection) else float(d)
    return sample_sector(rng, Sector(Point2(*apex), heading, r, theta), env.bounds)


def plan_vlm_rrt(env: Env, cfg: PlannerConfig, oracle: DirectionOracle | None,
                 events: Sequence[ScenarioEvent] | None = None, keep_tree: bool = True,
                 on_answer: AnswerHook | None = None) -> PlanResult:
    """Oracle-guided RRT.

    Each iteration draws ``alpha`` from U(0, 1]; when ``alpha <= gamma`` a
    random leaf is picked, the oracle is asked for a heading and the sample
    comes from the sector ahead of that leaf. Otherwise, or when the oracle
    fails, the sample is uniform. Extension, collision test and goal test are
    those of plain RRT, with the nearest vertex taken over the whole tree.

    ``on_answer(iteration, env, leaf, answer)`` is called after every oracle
    query (``answer`` is None on failure).
    """
    t0 = time.perf_counter()
    root = env.start_point
    if not point_free(root, env.obstacle_array):
        raise ValueError("start point is inside an obstacle")
    uniform_rng, guided_rng = planner_streams(cfg.rng_seed)
    boxes = env.obstacle_array
    schedule = sorted(events or (), key=lambda e: e.at_iteration)
    tree = Tree(root, capacity=cfg.max_iterations + 1)
    aperture = math.radians(cfg.sector_aperture)
    history: list[tuple[Point2, CompassDirection]] = []
    queries = 0
    i = 0
    while i < cfg.max_iterations:
        env, moved = apply_events(env, schedule, i + 1)
        if moved and not keep_tree:
            tree = Tree(root, capacity=cfg.max_iterations + 1)
        rand = None
        alpha = 1.0 - guided_rng.random() if cfg.gamma > 0 else 1.0
        if oracle is not None and cfg.gamma > 0 and alpha <= cfg.gamma:
            leaf_idx = pick_leaf_node(tree, guided_rng)
            leaf = tree.vertex(leaf_idx)
            snapshot = None
            if oracle.needs_snapshot:
                from .snapshot import render_snapshot

                snapshot = render_snapshot(env, tree, highlight=leaf_idx)
            query = OracleQuery(leaf, env.goal_centroid, tuple(history), snapshot, env)
            queries += 1
            try:
                answer = oracle.answer(query)
            except OracleError as exc:
                log.warning("oracle failed at iteration %d (%s); sampling uniformly", i + 1, exc)
                answer = None
            if on_answer is not None:
                on_answer(i + 1, env, leaf, answer)
            if answer is not None:
                history.append((leaf, answer.direction))
                rand, _ = sample_state_vlm(leaf, answer.direction, cfg.sector_radius, aperture,
                                           env, guided_rng)
        if rand is None:
            rand = sample_state(uniform_rng, env.bounds)
        nearest = nearest_neighbor(tree, rand)
        near_pt = tree.vertex(nearest)
        new = steer(near_pt, rand, cfg.delta)
        i += 1
        if segment_free(near_pt, new, boxes):
            v = tree.add(new, nearest)
            if goal_reached(new, env, cfg.epsilon, cfg.goal_mode):
                return PlanResult(SUCCESS, retrieve_plan(tree, v), i, len(tree), queries,
                                  time.perf_counter() - t0, tree)
    return PlanResult(ITERATION_LIMIT, [], i, len(tree), queries, time.perf_counter() - t0, tree)

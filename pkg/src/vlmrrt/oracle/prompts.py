"""Prompt templates for the three prompting regimes."""

from __future__ import annotations

from dataclasses import dataclass

from ..env import Env, Point2, Rect
from ..sector import CompassDirection
from .base import COT, FEW_SHOT, HISTORY_CAP, PROMPT_MODES, ZERO_SHOT, OracleQuery

TOKENS = [d.value for d in CompassDirection]

SYSTEM_TEXT = (
    "You are the navigation module of an autonomous UAV flying at fixed altitude over a "
    "wildfire area. You look at a top-down map and decide in which compass direction the "
    "UAV should explore next so that it reaches the goal region by the shortest safe route."
)

OUTPUT_CLAUSE = (
    "Output format (mandatory): finish your reply with exactly one line of the form\n"
    "DIRECTION: <TOKEN>\n"
    f"where <TOKEN> is one of {', '.join(TOKENS)}. North is up in the image, east is right."
)

COT_STEPS = (
    "1. Obstacle identification: list the dark gray fire fronts near the highlighted node "
    "and say which of them lie between it and the green goal region.",
    "2. Relative position analysis: describe where the green goal region lies relative to "
    "the highlighted node (bearing and rough distance).",
    "3. Path feasibility evaluation: for the candidate directions toward the goal, decide "
    "whether a straight move of about 30 m is blocked, and pick the best unblocked one.",
)


@dataclass(frozen=True)
class FewShotExample:
    """A small hand-checked scene with its expected answer."""

    title: str
    leaf: Point2
    goal: Rect
    obstacles: tuple[Rect, ...]
    answer: CompassDirection
    rationale: str

    def env(self, bounds: Rect = Rect(Point2(0, 0), Point2(500, 500))) -> Env:
        start = Rect(Point2(self.leaf.x - 2, self.leaf.y - 2), Point2(self.leaf.x + 2, self.leaf.y + 2))
        return Env(bounds, start, self.goal, self.obstacles)


def _r(x0, y0, x1, y1) -> Rect:
    return Rect(Point2(x0, y0), Point2(x1, y1))


FEW_SHOT_EXAMPLES = (
    FewShotExample(
        "unobstructed, goal due east",
        Point2(100, 250), _r(190, 240, 210, 260), (),
        CompassDirection.E,
        "Nothing lies between the node and the green region, which is straight to the right.",
    ),
    FewShotExample(
        "unobstructed, goal to the north-east",
        Point2(100, 100), _r(160, 160, 180, 180), (),
        CompassDirection.NE,
        "The green region is up and to the right at about 45 degrees with a clear line of sight.",
    ),
    FewShotExample(
        "single fire front across the direct line",
        Point2(200, 200), _r(290, 190, 310, 210), (_r(205, 196, 240, 240),),
        CompassDirection.SE,
        "The goal is due east but a fire front right ahead blocks the direct line; its lower edge "
        "is just below the node, so slip past it to the south-east.",
    ),
    FewShotExample(
        "several fire fronts, gap to the north",
        Point2(250, 100), _r(240, 250, 260, 270), (_r(180, 120, 245, 150), _r(262, 120, 330, 150),
                                                   _r(150, 200, 200, 240)),
        CompassDirection.N,
        "Two fire fronts leave a gap straight above the node and the goal is further north; "
        "the third front is off to the west and does not matter.",
    ),
)


def _fmt(p) -> str:
    return f"({p[0]:.1f}, {p[1]:.1f})"


def _state_block(q: OracleQuery) -> str:
    lines = [
        "Map legend: white = free space, dark gray = fire front (no-fly), red dot = home depot "
        "(start), green = goal region with a dark green dot at its centre, light blue lines = "
        "explored tree, blue dots = leaf nodes, large blue ring = the node you must advise on.",
    ]
    if q.snapshot is not None:
        u, v = q.snapshot.world_to_pixel(q.query_point)
        lines.append(f"The map is {q.snapshot.width}x{q.snapshot.height} pixels; "
                     f"the ringed node is at pixel {_fmt((u, v))}, world position {_fmt(q.query_point)} m.")
    else:
        lines.append(f"The ringed node is at world position {_fmt(q.query_point)} m.")
    hist = q.recent_history(HISTORY_CAP)
    if hist:
        lines.append("Your most recent answers this mission (oldest first):")
        lines += [f"- from {_fmt(p)}: {d.value}" for p, d in hist]
    else:
        lines.append("This is your first decision in this mission.")
    return "\n".join(lines)


def _example_block(k: int, ex: FewShotExample) -> str:
    obs = "; ".join(f"[{o.min.x:.0f},{o.min.y:.0f}]-[{o.max.x:.0f},{o.max.y:.0f}]" for o in ex.obstacles)
    return "\n".join([
        f"Example {k} ({ex.title}):",
        f"  ringed node at {_fmt(ex.leaf)}; green goal region spans "
        f"[{ex.goal.min.x:.0f},{ex.goal.min.y:.0f}]-[{ex.goal.max.x:.0f},{ex.goal.max.y:.0f}]; "
        f"fire fronts: {obs or 'none'}.",
        f"  Reasoning: {ex.rationale}",
        f"  DIRECTION: {ex.answer.value}",
    ])


def build_prompt(q: OracleQuery, mode: str = ZERO_SHOT) -> tuple[str, str, bytes | None]:
    """``(system_text, user_text, png_bytes)`` for one oracle query."""
    if mode not in PROMPT_MODES:
        raise ValueError(f"unknown prompt mode {mode!r}")
    parts = [
        "Task: the attached image is a top-down map of the mission area. Choose the compass "
        "direction in which the ringed node should be extended to make progress toward the "
        "green goal region while staying clear of fire fronts. Legal answers: "
        + ", ".join(TOKENS) + ".",
        _state_block(q),
    ]
    if mode == FEW_SHOT:
        parts.append("Worked examples (world coordinates in metres, x east, y north):\n\n"
                     + "\n\n".join(_example_block(k, ex) for k, ex in enumerate(FEW_SHOT_EXAMPLES, 1)))
    elif mode == COT:
        parts.append("Think step by step before answering:\n" + "\n".join(COT_STEPS))
    parts.append(OUTPUT_CLAUSE)
    image = q.snapshot.to_png() if q.snapshot is not None else None
    return SYSTEM_TEXT, "\n\n".join(parts), image

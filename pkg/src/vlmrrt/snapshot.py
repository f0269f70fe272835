"""Raster snapshots for the oracle and SVG figures for humans."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image, ImageDraw

from .env import Env, Point2
from .planner_core import PlanResult, Tree
from .sector import Sector

WHITE = (255, 255, 255)
OBSTACLE = (64, 64, 64)
START = (255, 0, 0)
GOAL = (0, 200, 0)
GOAL_CENTROID = (0, 110, 0)
EDGE = (160, 200, 255)
LEAF = (0, 0, 255)
SECTOR = (255, 230, 0)
SECTOR_ALPHA = 110

LEGEND = {
    "background": WHITE,
    "obstacle": OBSTACLE,
    "start": START,
    "goal region": GOAL,
    "goal centroid": GOAL_CENTROID,
    "tree edge": EDGE,
    "leaf node": LEAF,
    "sampling sector": SECTOR,
}

COLOR_NAMES = {
    WHITE: "white",
    OBSTACLE: "dark gray",
    START: "red",
    GOAL: "green",
    GOAL_CENTROID: "dark green",
    EDGE: "light blue",
    LEAF: "blue",
    SECTOR: "yellow",
}


@dataclass(frozen=True)
class Transform:
    """World metres to continuous pixel coordinates; +y world is image-up."""

    scale: float
    x0: float
    y1: float

    def to_pixel(self, p) -> tuple[float, float]:
        return (p[0] - self.x0) * self.scale, (self.y1 - p[1]) * self.scale

    def to_world(self, q) -> Point2:
        return Point2(self.x0 + q[0] / self.scale, self.y1 - q[1] / self.scale)


def transform_for(env: Env, size: int) -> tuple[Transform, int, int]:
    b = env.bounds
    scale = size / max(b.width, b.height)
    w = max(1, int(round(b.width * scale)))
    h = max(1, int(round(b.height * scale)))
    return Transform(scale, b.min.x, b.max.y), w, h


@dataclass(frozen=True)
class Snapshot:
    width: int
    height: int
    pixels: np.ndarray = field(repr=False)  # (height, width, 3) uint8
    transform: Transform
    legend: dict = field(default_factory=lambda: dict(LEGEND))

    def world_to_pixel(self, p) -> tuple[float, float]:
        return self.transform.to_pixel(p)

    def pixel_to_world(self, q) -> Point2:
        return self.transform.to_world(q)

    def color_at(self, p) -> tuple[int, int, int]:
        u, v = self.world_to_pixel(p)
        i = min(self.height - 1, max(0, int(v)))
        j = min(self.width - 1, max(0, int(u)))
        return tuple(int(c) for c in self.pixels[i, j])

    def to_png(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, "RGB").save(buf, format="PNG", optimize=False)
        return buf.getvalue()

    def legend_text(self) -> str:
        return "\n".join(f"- {role}: {COLOR_NAMES[c]}" for role, c in self.legend.items())


def _box(tr: Transform, r) -> list[int]:
    (u0, v0), (u1, v1) = tr.to_pixel((r.min.x, r.max.y)), tr.to_pixel((r.max.x, r.min.y))
    return [int(round(u0)), int(round(v0)), max(int(round(u0)), int(round(u1)) - 1),
            max(int(round(v0)), int(round(v1)) - 1)]


def _dot(draw: ImageDraw.ImageDraw, tr: Transform, p, radius: int, fill=None, outline=None, width=1):
    u, v = tr.to_pixel(p)
    u, v = int(u), int(v)
    draw.ellipse([u - radius, v - radius, u + radius, v + radius], fill=fill, outline=outline,
                 width=width)


def render_snapshot(env: Env, tree: Tree | None = None, highlight: int | None = None,
                    sector: Sector | None = None, size: int = 512) -> Snapshot:
    """Deterministic raster of the world and the exploration state.

    Drawing order: obstacles, goal, sector wedge, tree edges, leaves, markers.
    The root vertex is drawn as the start marker, not as a leaf.
    """
    tr, w, h = transform_for(env, size)
    img = Image.new("RGB", (w, h), WHITE)
    draw = ImageDraw.Draw(img)
    for o in env.obstacles:
        draw.rectangle(_box(tr, o), fill=OBSTACLE)
    draw.rectangle(_box(tr, env.goal), fill=GOAL)

    if sector is not None:
        overlay = Image.new("RGBA", (w, h), (0, 0, 0, 0))
        od = ImageDraw.Draw(overlay)
        u, v = tr.to_pixel(sector.apex)
        rp = sector.radius * tr.scale
        half = math.degrees(sector.aperture) / 2
        heading = math.degrees(sector.direction)
        od.pieslice([u - rp, v - rp, u + rp, v + rp], -heading - half, -heading + half,
                    fill=SECTOR + (SECTOR_ALPHA,))
        img = Image.alpha_composite(img.convert("RGBA"), overlay).convert("RGB")
        draw = ImageDraw.Draw(img)

    if tree is not None:
        pts = tree.points
        for child in range(1, len(tree)):
            par = tree.parent[child]
            if par is None:
                continue
            a, b = tr.to_pixel(pts[par]), tr.to_pixel(pts[child])
            draw.line([(int(a[0]), int(a[1])), (int(b[0]), int(b[1]))], fill=EDGE, width=1)
        for leaf in tree.leaves():
            if leaf != 0:
                _dot(draw, tr, pts[leaf], 2, fill=LEAF)
        if highlight is not None and highlight != 0:
            _dot(draw, tr, pts[highlight], 6, outline=LEAF, width=2)

    _dot(draw, tr, env.goal_centroid, 2, fill=GOAL_CENTROID)
    _dot(draw, tr, env.start_point, 4, fill=START)
    return Snapshot(w, h, np.asarray(img, dtype=np.uint8).copy(), tr)


# --------------------------------------------------------------------------
# SVG

def _f(v: float) -> str:
    return f"{v:.3f}"


def _hex(c) -> str:
    return "#%02x%02x%02x" % c


def export_figure(env: Env, plan: PlanResult | None = None, tree: Tree | None = None,
                  sector: Sector | None = None, path: Sequence | None = None,
                  title: str | None = None) -> bytes:
    """Vector figure of the world with optional tree and path overlays."""
    b = env.bounds
    W, H = b.width, b.height
    legend_h = 0.06 * H
    if tree is None and plan is not None:
        tree = plan.tree
    if path is None and plan is not None:
        path = plan.path
    path = list(path or [])

    def X(x):
        return _f(x - b.min.x)

    def Y(y):
        return _f(b.max.y - y)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(W)}" '
        f'height="{_f(H + legend_h)}" viewBox="0 0 {_f(W)} {_f(H + legend_h)}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{_f(W)}" height="{_f(H)}" fill="{_hex(WHITE)}" stroke="black"/>')
    out.append('<g id="obstacles">')
    for o in env.obstacles:
        out.append(f'<rect x="{X(o.min.x)}" y="{Y(o.max.y)}" width="{_f(o.width)}" '
                   f'height="{_f(o.height)}" fill="{_hex(OBSTACLE)}"/>')
    out.append("</g>")
    g = env.goal
    out.append(f'<rect id="goal" x="{X(g.min.x)}" y="{Y(g.max.y)}" width="{_f(g.width)}" '
               f'height="{_f(g.height)}" fill="{_hex(GOAL)}"/>')
    s = env.start
    out.append(f'<rect id="start" x="{X(s.min.x)}" y="{Y(s.max.y)}" width="{_f(s.width)}" '
               f'height="{_f(s.height)}" fill="none" stroke="{_hex(START)}"/>')
    if sector is not None:
        a0 = sector.direction - sector.aperture / 2
        a1 = sector.direction + sector.aperture / 2
        ax, ay = sector.apex
        p0 = (ax + sector.radius * math.cos(a0), ay + sector.radius * math.sin(a0))
        p1 = (ax + sector.radius * math.cos(a1), ay + sector.radius * math.sin(a1))
        large = 1 if sector.aperture > math.pi else 0
        # image y is flipped, so a counter-clockwise world arc is sweep-flag 0
        out.append(f'<path id="sector" d="M {X(ax)} {Y(ay)} L {X(p0[0])} {Y(p0[1])} '
                   f'A {_f(sector.radius)} {_f(sector.radius)} 0 {large} 0 {X(p1[0])} {Y(p1[1])} Z" '
                   f'fill="{_hex(SECTOR)}" fill-opacity="0.45"/>')
    if tree is not None:
        pts = tree.points
        out.append(f'<g id="tree" stroke="{_hex(EDGE)}" stroke-width="0.8">')
        for child in range(1, len(tree)):
            par = tree.parent[child]
            if par is not None:
                out.append(f'<line x1="{X(pts[par][0])}" y1="{Y(pts[par][1])}" '
                           f'x2="{X(pts[child][0])}" y2="{Y(pts[child][1])}"/>')
        out.append("</g>")
        out.append(f'<g id="leaves" fill="{_hex(LEAF)}">')
        for leaf in tree.leaves():
            if leaf != 0:
                out.append(f'<circle cx="{X(pts[leaf][0])}" cy="{Y(pts[leaf][1])}" r="1.5"/>')
        out.append("</g>")
    if path:
        coords = " ".join(f"{X(p[0])},{Y(p[1])}" for p in path)
        out.append(f'<polyline id="path" points="{coords}" fill="none" stroke="black" stroke-width="2"/>')
    gc = env.goal_centroid
    out.append(f'<circle id="goal-centroid" cx="{X(gc.x)}" cy="{Y(gc.y)}" r="2" fill="{_hex(GOAL_CENTROID)}"/>')
    sp = env.start_point
    out.append(f'<circle id="start-point" cx="{X(sp.x)}" cy="{Y(sp.y)}" r="3" fill="{_hex(START)}"/>')

    out.append('<g id="legend" font-family="sans-serif" font-size="10">')
    items = [("start", START), ("goal", GOAL), ("obstacle", OBSTACLE), ("tree", EDGE),
             ("leaf", LEAF), ("path", (0, 0, 0))]
    step = W / len(items)
    for k, (name, color) in enumerate(items):
        x = k * step + 4
        y = H + legend_h / 2
        out.append(f'<rect x="{_f(x)}" y="{_f(y - 4)}" width="8" height="8" fill="{_hex(color)}"/>')
        out.append(f'<text x="{_f(x + 12)}" y="{_f(y + 4)}">{name}</text>')
    out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")

"""Oracles that need no model: white-box answers (exact or noisy) plus record and replay."""

from __future__ import annotations

import json
import math
import threading
import time
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from ..env import Env, segment_entry
from ..sector import CompassDirection
from .base import (ZERO_SHOT, DirectionOracle, OracleAnswer, OracleError, OracleQuery,
                   TapeExhausted)


def ray_progress(env: Env, origin, goal, direction: CompassDirection, length: float) -> float:
    """Distance-to-goal decrease achieved by the farthest free point of a ray.

    The ray is cut at the first obstacle contact and at the world boundary.
    """
    ux, uy = direction.unit
    end = (origin[0] + length * ux, origin[1] + length * uy)
    t = min(1.0, segment_entry(origin, end, env.obstacle_array))
    b = env.bounds
    for o, d, lo, hi in ((origin[0], ux, b.min.x, b.max.x), (origin[1], uy, b.min.y, b.max.y)):
        if d > 1e-15:
            t = min(t, (hi - o) / (d * length))
        elif d < -1e-15:
            t = min(t, (lo - o) / (d * length))
    t = max(t, 0.0)
    far = (origin[0] + t * length * ux, origin[1] + t * length * uy)
    return math.dist(origin, goal) - math.dist(far, goal)


def geometric_direction(env: Env, origin, goal, length: float) -> CompassDirection:
    best, best_score = CompassDirection.N, -math.inf
    for d in CompassDirection:  # clockwise from N, so the first maximiser wins ties
        score = ray_progress(env, origin, goal, d, length)
        if score > best_score + 1e-9:
            best, best_score = d, score
    return best


def geometric_oracle_answer(q: OracleQuery, env: Env, ray_length: float = 30.0) -> OracleAnswer:
    d = geometric_direction(env, q.query_point, q.goal_centroid, ray_length)
    return OracleAnswer(d, f"DIRECTION: {d.value}", 0.0, ZERO_SHOT)


class GeometricOracle(DirectionOracle):
    """White-box oracle: reads the true environment from the query, not the image."""

    def __init__(self, env: Env | None = None, ray_length: float = 30.0):
        self.env = env
        self.ray_length = ray_length

    def answer(self, query: OracleQuery) -> OracleAnswer:
        env = query.env or self.env
        if env is None:
            raise OracleError(OracleError.TRANSPORT, "geometric oracle has no environment")
        return geometric_oracle_answer(query, env, self.ray_length)


def noisy_oracle_answer(q: OracleQuery, env: Env, p_wrong: float, rng,
                        ray_length: float = 30.0) -> OracleAnswer:
    if not 0.0 <= p_wrong <= 1.0:
        raise ValueError("p_wrong must lie in [0, 1]")
    truth = geometric_oracle_answer(q, env, ray_length)
    if rng.random() >= p_wrong:
        return truth
    others = [d for d in CompassDirection if d is not truth.direction]
    d = others[int(rng.integers(len(others)))]
    return OracleAnswer(d, f"DIRECTION: {d.value}", 0.0, ZERO_SHOT)


class NoisyOracle(DirectionOracle):
    """Geometric answer corrupted with probability ``p_wrong`` to one of the other seven."""

    def __init__(self, p_wrong: float, seed: int | np.random.Generator = 0, env: Env | None = None,
                 ray_length: float = 30.0):
        if not 0.0 <= p_wrong <= 1.0:
            raise ValueError("p_wrong must lie in [0, 1]")
        self.p_wrong = p_wrong
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.env = env
        self.ray_length = ray_length
        self._lock = threading.Lock()

    def answer(self, query: OracleQuery) -> OracleAnswer:
        env = query.env or self.env
        if env is None:
            raise OracleError(OracleError.TRANSPORT, "noisy oracle has no environment")
        with self._lock:
            return noisy_oracle_answer(query, env, self.p_wrong, self.rng, self.ray_length)


# --------------------------------------------------------------------------
# record / replay

class ReplayOracle(DirectionOracle):
    """Plays back a tape of answers (or recorded failures) in order."""

    def __init__(self, tape: Iterable[OracleAnswer | OracleError]):
        self.tape = list(tape)
        self.position = 0
        self._lock = threading.Lock()

    def answer(self, query: OracleQuery) -> OracleAnswer:
        with self._lock:
            if self.position >= len(self.tape):
                raise TapeExhausted()
            entry = self.tape[self.position]
            self.position += 1
        if isinstance(entry, OracleError):
            raise OracleError(entry.kind, "replayed failure", entry.raw_response)
        return entry

    @classmethod
    def from_jsonl(cls, source: str | Path | IO[str]) -> "ReplayOracle":
        return cls(load_session(source))


def replay_oracle_answer(q: OracleQuery, tape: ReplayOracle) -> OracleAnswer:
    return tape.answer(q)


class RecordingOracle(DirectionOracle):
    """Forwards to ``inner`` and logs every exchange as a JSON line."""

    def __init__(self, inner: DirectionOracle, sink: IO[str] | None = None):
        self.inner = inner
        self.sink = sink
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    @property
    def needs_snapshot(self) -> bool:  # type: ignore[override]
        return self.inner.needs_snapshot

    def answer(self, query: OracleQuery) -> OracleAnswer:
        t0 = time.perf_counter()
        try:
            ans = self.inner.answer(query)
        except OracleError as exc:
            self._write({"query": query.digest(), "error": exc.kind,
                         "raw_response": exc.raw_response, "latency": time.perf_counter() - t0})
            raise
        self._write({"query": query.digest(), "answer": ans.to_dict()})
        return ans

    def _write(self, entry: dict) -> None:
        with self._lock:
            self.entries.append(entry)
            if self.sink is not None:
                self.sink.write(json.dumps(entry, sort_keys=True) + "\n")
                self.sink.flush()

    def tape(self) -> list[OracleAnswer | OracleError]:
        return [_entry_to_tape(e) for e in self.entries]


def _entry_to_tape(entry: dict) -> OracleAnswer | OracleError:
    if "answer" in entry:
        return OracleAnswer.from_dict(entry["answer"])
    return OracleError(entry["error"], "recorded failure", entry.get("raw_response"))


def load_session(source: str | Path | IO[str]) -> list[OracleAnswer | OracleError]:
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        text = Path(source).read_text(encoding="utf-8")
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(_entry_to_tape(json.loads(line)))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"session line {n}: {exc}") from None
    return out

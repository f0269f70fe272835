from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

from ..env import Env, Point2
from ..sector import CompassDirection

if TYPE_CHECKING:
    from ..snapshot import Snapshot

ZERO_SHOT = "ZeroShot"
FEW_SHOT = "FewShot"
COT = "CoT"
PROMPT_MODES = (ZERO_SHOT, FEW_SHOT, COT)

HISTORY_CAP = 5

# two-letter tokens first so "NE" is not read as "N"
ANSWER_PATTERN = re.compile(r"DIRECTION:\s*(NE|NW|SE|SW|N|E|S|W)", re.IGNORECASE)


class OracleError(RuntimeError):
    """A direction could not be obtained; ``kind`` is one of the class constants."""

    TRANSPORT = "Transport"
    PARSE = "Parse"
    RATE_LIMIT = "RateLimit"

    def __init__(self, kind: str, message: str = "", raw_response: str | None = None):
        self.kind = kind
        self.raw_response = raw_response
        super().__init__(f"{kind}: {message}" if message else kind)


class TapeExhausted(OracleError):
    def __init__(self):
        super().__init__("TapeExhausted", "replay tape has no entries left")


def parse_direction(text: str) -> CompassDirection:
    """Last ``DIRECTION: <token>`` in ``text`` wins; no match is a Parse error."""
    matches = ANSWER_PATTERN.findall(text or "")
    if not matches:
        raise OracleError(OracleError.PARSE, "no DIRECTION: <token> in response", text)
    return CompassDirection.parse(matches[-1])


@dataclass(frozen=True)
class OracleQuery:
    query_point: Point2
    goal_centroid: Point2
    history: tuple[tuple[Point2, CompassDirection], ...] = ()
    snapshot: "Snapshot | None" = None
    # ground-truth handle; only white-box oracles read it, it never goes on the wire
    env: Env | None = field(default=None, compare=False)

    def recent_history(self, cap: int = HISTORY_CAP) -> tuple[tuple[Point2, CompassDirection], ...]:
        return self.history[-cap:] if cap > 0 else ()

    def digest(self) -> dict[str, Any]:
        return {
            "query_point": [self.query_point.x, self.query_point.y],
            "goal_centroid": [self.goal_centroid.x, self.goal_centroid.y],
            "history": [[[p.x, p.y], d.value] for p, d in self.history],
        }


@dataclass(frozen=True)
class OracleAnswer:
    direction: CompassDirection
    raw_response: str = ""
    latency: float = 0.0
    prompt_mode: str = ZERO_SHOT

    def to_dict(self) -> dict[str, Any]:
        return {"direction": self.direction.value, "raw_response": self.raw_response,
                "latency": self.latency, "prompt_mode": self.prompt_mode}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OracleAnswer":
        return cls(CompassDirection.parse(d["direction"]), d.get("raw_response", ""),
                   float(d.get("latency", 0.0)), d.get("prompt_mode", ZERO_SHOT))


class DirectionOracle:
    """Maps a query (snapshot + leaf point) to a compass direction.

    Implementations raise :class:`OracleError` when they cannot answer.
    ``needs_snapshot`` tells the planner whether to render an image first.
    """

    needs_snapshot: bool = False

    def answer(self, query: OracleQuery) -> OracleAnswer:
        raise NotImplementedError


def history_tuple(pairs: Sequence[tuple[Point2, CompassDirection]]) -> tuple:
    return tuple((Point2(*p), d) for p, d in pairs)

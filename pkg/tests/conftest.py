import os
import sys

import pytest
from hypothesis import settings

from vlmrrt.env import Env, Point2, Rect

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def rect(x0, y0, x1, y1) -> Rect:
    return Rect(Point2(x0, y0), Point2(x1, y1))


WORLD = rect(0, 0, 500, 500)


@pytest.fixture
def open_env():
    """Small obstacle-free world; goal 40 m east of the start centroid."""
    return Env(rect(80, 80, 160, 120), rect(95, 95, 105, 105), rect(135, 95, 145, 105))


@pytest.fixture
def walled_env():
    """Goal boxed in by four touching walls."""
    walls = (rect(290, 290, 340, 295), rect(290, 335, 340, 340),
             rect(290, 290, 295, 340), rect(335, 290, 340, 340))
    return Env(WORLD, rect(95, 95, 105, 105), rect(310, 310, 320, 320), walls)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

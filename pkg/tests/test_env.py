import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import WORLD, rect
from oracles import dense_segment_hits
from vlmrrt.env import (Env, InfeasibleScenario, ParseError, Point2, Rect, Scenario, ScenarioEvent,
                        ScenarioParams, goal_reached, grid_path_exists, load_scenario, point_free,
                        point_in_rect, random_relocations, random_scenario, save_scenario,
                        segment_entry, segment_free, segment_hits)

coord = st.floats(-50, 550, allow_nan=False)


def test_rect_basics():
    r = rect(0, 0, 4, 2)
    assert r.width == 4 and r.height == 2
    assert r.centroid == Point2(2, 1)
    assert r.as_list() == [0, 0, 4, 2]
    assert Rect.from_list([0, 0, 4, 2]) == r
    assert r.intersects(rect(4, 2, 5, 5))  # closed sets share a corner
    assert not r.intersects(rect(4.001, 0, 5, 1))
    with pytest.raises(ValueError):
        rect(1, 0, 0, 1)
    with pytest.raises(ValueError):
        rect(0, 0, math.nan, 1)


def test_point_in_rect_closed():
    r = rect(0, 0, 1, 1)
    assert point_in_rect((1, 1), r) and point_in_rect((0, 0.5), r)
    assert not point_in_rect((1 + 1e-12, 0.5), r)


def test_segment_examples():
    box = [rect(10, 10, 20, 20)]
    assert not segment_free((0, 15), (30, 15), box)  # straight through
    assert segment_free((0, 0), (30, 0), box)
    assert not segment_free((0, 10), (30, 10), box)  # grazes the closed edge
    assert not segment_free((20, 20), (30, 30), box)  # touches a corner
    assert not segment_free((12, 12), (13, 13), box)  # fully inside
    assert segment_free((0, 0), (9.999, 9.999), box)
    assert segment_free((5, 5), (5, 5), [])  # no obstacles at all


def test_segment_entry_parameter():
    box = [rect(10, -5, 20, 5)]
    assert segment_entry((0, 0), (40, 0), box) == pytest.approx(0.25)
    assert segment_entry((0, 0), (5, 0), box) == math.inf
    assert segment_entry((15, 0), (40, 0), box) == 0.0


def test_segment_hits_is_per_obstacle():
    boxes = [rect(10, -1, 11, 1), rect(50, 50, 60, 60), rect(20, -1, 21, 1)]
    assert segment_hits((0, 0), (30, 0), boxes).tolist() == [True, False, True]


@given(coord, coord, coord, coord, st.lists(st.tuples(coord, coord, st.floats(1, 80), st.floats(1, 80)),
                                              max_size=4))
def test_segment_free_matches_dense_sampling(ax, ay, bx, by, raw):
    boxes = [rect(x, y, x + w, y + h) for x, y, w, h in raw]
    exact = not segment_free((ax, ay), (bx, by), boxes)
    dense = dense_segment_hits((ax, ay), (bx, by), [b.as_list() for b in boxes])
    # dense sampling can only miss contacts, never invent them
    if dense:
        assert exact


def test_point_free():
    boxes = np.array([[0, 0, 1, 1.0]])
    assert not point_free((1, 1), boxes)
    assert point_free((1.5, 1), boxes)


def test_goal_reached_modes(open_env):
    g = open_env.goal_centroid
    assert goal_reached((g.x + 1.0, g.y), open_env, 1.0)
    assert not goal_reached((g.x + 1.01, g.y), open_env, 1.0)
    inside_rect = (open_env.goal.min.x + 0.5, open_env.goal.min.y + 0.5)
    assert not goal_reached(inside_rect, open_env, 1.0, "strict_ball")
    assert goal_reached(inside_rect, open_env, 1.0, "ball_or_rect")
    with pytest.raises(ValueError):
        goal_reached((0, 0), open_env, 1.0, "nope")


def test_env_validate():
    ok = Env(WORLD, rect(0, 0, 10, 10), rect(100, 100, 110, 110), (rect(50, 50, 60, 60),))
    ok.validate()
    with pytest.raises(ValueError, match="overlaps"):
        Env(WORLD, rect(0, 0, 10, 10), rect(100, 100, 110, 110), (rect(5, 5, 60, 60),)).validate()
    with pytest.raises(ValueError, match="outside"):
        Env(WORLD, rect(0, 0, 10, 10), rect(495, 100, 510, 110)).validate()
    with pytest.raises(ValueError, match="centroid"):
        Env(WORLD, rect(0, 0, 10, 10), rect(100, 100, 110, 110), (), Point2(0, 0))


def test_grid_path_exists(open_env, walled_env):
    assert grid_path_exists(open_env)
    assert not grid_path_exists(walled_env)


def test_random_scenario_deterministic_and_feasible():
    for seed in range(20):
        a = random_scenario(seed, 12)
        b = random_scenario(seed, 12)
        assert save_scenario(a) == save_scenario(b)
        a.validate()
        assert len(a.env.obstacles) == 12
        assert grid_path_exists(a.env)
        sep = math.dist(a.env.start_point, a.env.goal_centroid)
        assert 40.0 - 1e-9 <= sep <= 80.0 + 1e-9
    assert save_scenario(random_scenario(1, 12)) != save_scenario(random_scenario(2, 12))


def test_cup_blocks_the_direct_line():
    params = ScenarioParams(trap_fraction=1.0)
    for seed in range(10):
        env = random_scenario(seed, 10, params=params).env
        assert not segment_free(env.start_point, env.goal_centroid, env.obstacle_array)


def test_random_scenario_infeasible():
    params = ScenarioParams(obstacle_side=(400, 480), max_attempts=3)
    with pytest.raises(InfeasibleScenario):
        random_scenario(0, 6, params=params)
    with pytest.raises(ValueError):
        random_scenario(0, -1)


def test_relocations_are_reachable():
    sc = random_relocations(random_scenario(3, 10), 3, first_at=20, spacing=20)
    sc.validate()
    assert [e.at_iteration for e in sc.events] == [20, 40, 60]
    for e in sc.events:
        assert grid_path_exists(sc.env, goal=e.new_goal)


def test_save_load_roundtrip():
    sc = random_relocations(random_scenario(5, 9), 2)
    data = save_scenario(sc)
    back = load_scenario(data)
    assert back == sc
    assert save_scenario(back) == data


def _doc(**over):
    d = {"bounds": [0, 0, 500, 500], "start": [0, 0, 10, 10], "goal": [100, 100, 110, 110],
         "obstacles": [[50, 50, 60, 60]], "events": [], "seed": 0}
    d.update(over)
    return json.dumps(d, indent=2)


def test_load_reports_line_and_field():
    text = _doc(goal=[100, 100, 110])
    goal_line = 1 + text.splitlines().index('  "goal": [')
    with pytest.raises(ParseError) as exc:
        load_scenario(text)
    assert exc.value.field == "goal"
    assert exc.value.line == goal_line
    with pytest.raises(ParseError) as exc:
        load_scenario(_doc(obstacles=[[50, 50, 40, 60]]))
    assert exc.value.field.startswith("obstacles")
    with pytest.raises(ParseError):
        load_scenario(_doc(colour="red"))
    with pytest.raises(ParseError):
        load_scenario("{not json")
    with pytest.raises(ParseError):
        load_scenario(_doc(obstacles=[[5, 5, 60, 60]]))  # overlaps the start
    with pytest.raises(ParseError):
        load_scenario(_doc(events=[{"at_iteration": 0, "new_goal": [200, 200, 210, 210]}]))


def test_load_accepts_events():
    sc = load_scenario(_doc(events=[{"at_iteration": 5, "new_goal": [200, 200, 210, 210]}]))
    assert sc.events == (ScenarioEvent(5, rect(200, 200, 210, 210)),)
    assert isinstance(sc, Scenario)


def test_worked_scenario_examples():
    empty = random_scenario(42, 0)
    assert empty.env.obstacles == () and grid_path_exists(empty.env)
    busy = random_scenario(7, 12, WORLD)
    assert len(busy.env.obstacles) == 12
    assert grid_path_exists(busy.env, resolution=5.0)  # a 100 x 100 occupancy grid

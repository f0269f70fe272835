"""Oracle-guided RRT planning plus tools to track and benchmark the resulting paths."""

from .env import (Env, InfeasibleScenario, ParseError, Point2, Rect, Scenario, ScenarioEvent,
                  goal_reached, load_scenario, point_in_rect, random_scenario, save_scenario,
                  segment_free)
from .planner_core import (PlannerConfig, PlanResult, Tree, nearest_neighbor, plan_rrt,
                           plan_rrt_star, retrieve_plan, sample_state, steer)
from .sector import CompassDirection, Sector
from .vlm_planner import pick_leaf_node, plan_vlm_rrt, sample_state_vlm

__version__ = "0.1.0"

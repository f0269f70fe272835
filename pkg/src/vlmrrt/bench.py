"""Monte Carlo harness that runs paired trials over random worlds and reports on them."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from .env import DEFAULT_BOUNDS, Rect, Scenario, ScenarioParams, random_relocations, random_scenario
from .oracle import (ZERO_SHOT, DirectionOracle, GeometricOracle, NoisyOracle, OracleAnswer,
                     RemoteOracle, ReplayOracle, geometric_direction)
from .planner_core import (BALL_OR_RECT, ITERATION_LIMIT, SUCCESS, PlannerConfig, PlanResult, plan_rrt,
                           plan_rrt_star)
from .sector import wrap_angle
from .vlm_planner import plan_vlm_rrt

RRT = "RRT"
RRT_STAR = "RRTStar"
VLM_RRT = "VlmRrt"
PLANNERS = (RRT, RRT_STAR, VLM_RRT)
ERROR = "Error"

PLANNER_LABELS = {RRT: "RRT", RRT_STAR: "RRT*", VLM_RRT: "VLM-RRT"}


@dataclass(frozen=True)
class TrialRecord:
    scenario_id: int
    planner: str
    oracle_kind: str | None
    prompt_mode: str | None
    gamma: float | None
    status: str
    iterations: int
    path_length: float | None
    vlm_queries: int
    # timing is not part of record identity, so reruns compare equal
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if (self.path_length is not None) != (self.status == SUCCESS):
            raise ValueError("path_length must be present iff status is Success")

    @property
    def success(self) -> bool:
        return self.status == SUCCESS


RECORD_FIELDS = [f.name for f in dataclasses.fields(TrialRecord)]


@dataclass(frozen=True)
class CellSpec:
    """One column of the planner matrix."""

    planner: str
    oracle: str | None = None  # geometric | noisy:<p> | replay:<path> | remote
    gamma: float | None = None  # None means the base config's gamma
    prompt_mode: str | None = None

    def __post_init__(self):
        if self.planner not in PLANNERS:
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.planner == VLM_RRT and not self.oracle:
            raise ValueError("VlmRrt needs an oracle")
        if self.oracle:
            parse_oracle_spec(self.oracle)

    def resolved(self, base: PlannerConfig) -> "CellSpec":
        if self.planner != VLM_RRT:
            return CellSpec(self.planner)
        gamma = base.gamma if self.gamma is None else float(self.gamma)
        return CellSpec(self.planner, self.oracle, gamma, self.prompt_mode or ZERO_SHOT)


def parse_oracle_spec(spec: str) -> tuple[str, str | None]:
    kind, _, arg = spec.partition(":")
    if kind == "noisy":
        p = float(arg)
        if not 0.0 <= p <= 1.0:
            raise ValueError("noisy oracle probability must lie in [0, 1]")
    elif kind == "replay":
        if not arg:
            raise ValueError("replay oracle needs a path: replay:<file-or-dir>")
    elif kind not in ("geometric", "remote"):
        raise ValueError(f"unknown oracle {spec!r}")
    return kind, arg or None


def make_oracle(spec: str, seed: int = 0, prompt_mode: str = ZERO_SHOT,
                scenario_id: int | None = None) -> DirectionOracle:
    kind, arg = parse_oracle_spec(spec)
    if kind == "geometric":
        return GeometricOracle()
    if kind == "noisy":
        return NoisyOracle(float(arg), seed=seed)
    if kind == "replay":
        p = Path(arg)
        if p.is_dir():
            p = p / f"{scenario_id}.jsonl"
        return ReplayOracle.from_jsonl(p)
    return RemoteOracle.from_env(prompt_mode=prompt_mode)


def default_cells() -> tuple[CellSpec, ...]:
    return (CellSpec(RRT), CellSpec(RRT_STAR), CellSpec(VLM_RRT, "geometric"))


@dataclass(frozen=True)
class BenchConfig:
    n_trials: int = 100
    cells: tuple[CellSpec, ...] = field(default_factory=default_cells)
    planner: PlannerConfig = PlannerConfig(goal_mode=BALL_OR_RECT)
    seed: int = 0
    jobs: int = 1
    n_obstacles: tuple[int, int] = (8, 15)  # inclusive range, drawn per scenario
    scenario: ScenarioParams = ScenarioParams()
    bounds: Rect = DEFAULT_BOUNDS
    csv_path: str | None = None
    json_path: str | None = None
    table_path: str | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.cells:
            raise ValueError("the planner matrix is empty")
        lo, hi = self.n_obstacles
        if not 0 <= lo <= hi:
            raise ValueError("n_obstacles must be a range 0 <= lo <= hi")

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "cells": [{k: v for k, v in dataclasses.asdict(c).items() if v is not None} for c in self.cells],
            "planner": dataclasses.asdict(self.planner),
            "seed": self.seed,
            "jobs": self.jobs,
            "n_obstacles": list(self.n_obstacles),
            "scenario": dataclasses.asdict(self.scenario),
            "bounds": self.bounds.as_list(),
            "csv_path": self.csv_path,
            "json_path": self.json_path,
            "table_path": self.table_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown bench config keys: {sorted(unknown)}")
        kw = dict(d)
        if "cells" in kw:
            kw["cells"] = tuple(CellSpec(**c) for c in kw["cells"])
        if "planner" in kw:
            kw["planner"] = PlannerConfig(**kw["planner"])
        if "n_obstacles" in kw:
            kw["n_obstacles"] = tuple(int(v) for v in kw["n_obstacles"])
        if "scenario" in kw:
            kw["scenario"] = ScenarioParams(**{k: tuple(v) if isinstance(v, list) else v
                                               for k, v in kw["scenario"].items()})
        if "bounds" in kw:
            kw["bounds"] = Rect.from_list(kw["bounds"])
        return cls(**kw)


# --------------------------------------------------------------------------
# seeding

def _sub_seed(master: int, index: int, stream: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(index), int(stream)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def trial_seeds(master: int, index: int) -> dict[str, int]:
    """Independent seeds for trial ``index``; they depend on nothing else."""
    return {"scenario": _sub_seed(master, index, 0), "obstacles": _sub_seed(master, index, 1),
            "planner": _sub_seed(master, index, 2), "oracle": _sub_seed(master, index, 3)}


def bench_scenario(cfg: BenchConfig, index: int) -> Scenario:
    seeds = trial_seeds(cfg.seed, index)
    lo, hi = cfg.n_obstacles
    n_obs = int(np.random.default_rng(seeds["obstacles"]).integers(lo, hi + 1))
    return random_scenario(seeds["scenario"], n_obs, cfg.bounds, cfg.scenario)


# --------------------------------------------------------------------------
# trials

def run_cell(scenario: Scenario, cell: CellSpec, base: PlannerConfig, planner_seed: int,
             oracle_seed: int, scenario_id: int, events=None, keep_tree: bool = True,
             on_answer=None) -> TrialRecord:
    cell = cell.resolved(base)
    cfg = dataclasses.replace(base, rng_seed=planner_seed,
                              gamma=cell.gamma if cell.gamma is not None else base.gamma)
    t0 = time.perf_counter()
    try:
        if cell.planner == RRT:
            res = plan_rrt(scenario.env, cfg, events=events, keep_tree=keep_tree)
        elif cell.planner == RRT_STAR:
            res = plan_rrt_star(scenario.env, cfg)
        else:
            oracle = make_oracle(cell.oracle, oracle_seed, cell.prompt_mode, scenario_id)
            res = plan_vlm_rrt(scenario.env, cfg, oracle, events=events, keep_tree=keep_tree,
                               on_answer=on_answer)
    except Exception:  # recorded, never dropped
        return TrialRecord(scenario_id, cell.planner, cell.oracle, cell.prompt_mode, cell.gamma,
                           ERROR, 0, None, 0, time.perf_counter() - t0)
    return _record(scenario_id, cell, res)


def _record(scenario_id: int, cell: CellSpec, res: PlanResult) -> TrialRecord:
    return TrialRecord(scenario_id, cell.planner, cell.oracle, cell.prompt_mode, cell.gamma,
                       res.status, res.iterations_used, res.path_length if res.success else None,
                       res.vlm_queries, res.wall_time)


def _run_trial(cfg: BenchConfig, index: int) -> list[TrialRecord]:
    seeds = trial_seeds(cfg.seed, index)
    try:
        scenario = bench_scenario(cfg, index)
    except Exception:
        cells = [c.resolved(cfg.planner) for c in cfg.cells]
        return [TrialRecord(index, c.planner, c.oracle, c.prompt_mode, c.gamma, ERROR, 0, None, 0)
                for c in cells]
    return [run_cell(scenario, c, cfg.planner, seeds["planner"], seeds["oracle"], index)
            for c in cfg.cells]


@dataclass
class BenchResult:
    records: list[TrialRecord]
    summary: dict


def run_bench(cfg: BenchConfig) -> BenchResult:
    """Every cell runs on every scenario; records come back sorted by scenario."""
    if cfg.jobs == 1:
        chunks = [_run_trial(cfg, k) for k in range(cfg.n_trials)]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(_run_trial, [cfg] * cfg.n_trials, range(cfg.n_trials)))
    records = sorted((r for chunk in chunks for r in chunk), key=lambda r: r.scenario_id)
    return BenchResult(records, summarize(records))


# --------------------------------------------------------------------------
# aggregation

def cell_key(r: TrialRecord) -> tuple:
    return (r.planner, r.oracle_kind, r.prompt_mode, r.gamma)


def _mean(xs: Sequence[float]) -> float | None:
    return float(sum(xs) / len(xs)) if xs else None


def binomial_ci(k: int, n: int) -> tuple[float, float]:
    """Exact (Clopper-Pearson) 95% interval."""
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="exact")
    return float(ci.low), float(ci.high)


def aggregate(records: Sequence[TrialRecord]) -> dict:
    n = len(records)
    ok = [r for r in records if r.success]
    lo, hi = binomial_ci(len(ok), n)
    return {
        "n": n,
        "successes": len(ok),
        "success_rate": len(ok) / n,
        "success_ci95": [lo, hi],
        # failures count with the iterations they consumed (the budget)
        "mean_iterations_all": _mean([r.iterations for r in records]),
        "mean_iterations_success": _mean([r.iterations for r in ok]),
        "mean_path_length": _mean([r.path_length for r in ok]),
        "mean_vlm_queries": _mean([r.vlm_queries for r in records]),
    }


def paired_ratio(records: Sequence[TrialRecord], num: tuple, den: tuple) -> float | None:
    """Mean iterations of cell ``num`` over cell ``den`` on scenarios both ran."""
    by = {}
    for r in records:
        by.setdefault(cell_key(r), {})[r.scenario_id] = r
    a, b = by.get(num, {}), by.get(den, {})
    common = sorted(set(a) & set(b))
    if not common:
        return None
    den_mean = _mean([b[k].iterations for k in common])
    return _mean([a[k].iterations for k in common]) / den_mean if den_mean else None


def summarize(records: Sequence[TrialRecord]) -> dict:
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault(cell_key(r), []).append(r)
    cells = []
    rrt_key = next((k for k in groups if k[0] == RRT), None)
    for key, recs in groups.items():
        planner, oracle, mode, gamma = key
        entry = {"planner": planner, "oracle_kind": oracle, "prompt_mode": mode, "gamma": gamma}
        entry.update(aggregate(recs))
        if rrt_key is not None and key != rrt_key:
            entry["paired_iteration_ratio_vs_rrt"] = paired_ratio(records, key, rrt_key)
        cells.append(entry)
    return {"n_records": len(records), "cells": cells}


# --------------------------------------------------------------------------
# reports

def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([_csv_value(getattr(r, f)) for f in RECORD_FIELDS])
    return buf.getvalue()


def records_from_csv(text: str) -> list[TrialRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        def opt(name, conv):
            return conv(row[name]) if row[name] != "" else None

        out.append(TrialRecord(int(row["scenario_id"]), row["planner"], opt("oracle_kind", str),
                               opt("prompt_mode", str), opt("gamma", float), row["status"],
                               int(row["iterations"]), opt("path_length", float),
                               int(row["vlm_queries"]), float(row["wall_time"])))
    return out


def format_rate(successes: int, n: int) -> str:
    return f"{round(100 * successes / n)}% ({successes}/{n})"


def format_table(summary: dict) -> str:
    head = ["Algorithm", "Oracle", "Prompt Technique", "Gamma", "Success Rate",
            "Avg. Iterations (N)", "Avg. Iterations (all)", "Avg. Path Length (m)"]
    rows = []

    def num(v, fmt):
        return "-" if v is None else format(v, fmt)

    order = {p: i for i, p in enumerate(PLANNERS)}
    for c in sorted(summary["cells"], key=lambda c: (order[c["planner"]], c["oracle_kind"] or "",
                                                     c["prompt_mode"] or "", -(c["gamma"] or 0))):
        rows.append([PLANNER_LABELS[c["planner"]], c["oracle_kind"] or "-", c["prompt_mode"] or "-",
                     num(c["gamma"], ".2f"), format_rate(c["successes"], c["n"]),
                     num(c["mean_iterations_success"], ".1f"), num(c["mean_iterations_all"], ".1f"),
                     num(c["mean_path_length"], ".2f")])
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(head)]
    line = "  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip()
    out = [line, "-" * len(line)]
    out += ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(out) + "\n"


def emit_report(records: Sequence[TrialRecord], csv_path=None, json_path=None, table_path=None,
                extra: dict | None = None) -> tuple[str, dict, str]:
    """Write whichever reports have a path; return ``(csv_text, summary, table)``."""
    if not records:
        raise ValueError("no records to report")
    text_csv = records_to_csv(records)
    summary = summarize(records)
    if extra:
        summary.update(extra)
    table = format_table(summary)
    if csv_path:
        Path(csv_path).write_text(text_csv, encoding="utf-8", newline="")
    if json_path:
        Path(json_path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if table_path:
        Path(table_path).write_text(table, encoding="utf-8")
    return text_csv, summary, table


# --------------------------------------------------------------------------
# goal relocation

@dataclass
class RelocationEntry:
    event_index: int
    at_iteration: int
    applied: bool = False
    first_query_iteration: int | None = None
    first_answer: str | None = None
    # angle between the first answer and the bearing to the new goal centroid
    first_error_deg: float | None = None
    # first answer equals the obstacle-aware ground truth for the new goal
    first_matches_truth: bool | None = None
    detected_first: bool = False
    detection_iteration: int | None = None

    @property
    def iterations_to_detection(self) -> int | None:
        if self.detection_iteration is None:
            return None
        return self.detection_iteration - self.at_iteration


def bearing_error_deg(answer: OracleAnswer, leaf, goal) -> float:
    bearing = math.atan2(goal[1] - leaf[1], goal[0] - leaf[0])
    return abs(math.degrees(wrap_angle(answer.direction.angle - bearing)))


def run_dynamic_goal(scenario: Scenario, cell: CellSpec, base: PlannerConfig, planner_seed: int = 0,
                     oracle_seed: int = 0, keep_tree: bool = True, tolerance_deg: float = 45.0,
                     accept_detours: bool = True,
                     scenario_id: int = 0) -> tuple[TrialRecord, list[RelocationEntry]]:
    """Plan through the scenario's goal relocations and log detection latency.

    An answer detects the new goal when its heading lies within
    ``tolerance_deg`` of the bearing from the queried leaf to the new goal
    centroid. With ``accept_detours`` an answer equal to the obstacle-aware
    ground truth for the new goal also counts: a leaf pressed against an
    obstacle must turn away from the straight bearing, and that is a local
    path adjustment, not a failure to see the goal. Events scheduled after
    the run ends stay ``applied=False``.
    """
    if not scenario.events:
        raise ValueError("scenario has no relocation events")
    events = sorted(scenario.events, key=lambda e: e.at_iteration)
    log = [RelocationEntry(k, e.at_iteration) for k, e in enumerate(events)]

    def hook(iteration, env, leaf, answer):
        due = [e for e in log if e.at_iteration <= iteration]
        if not due:
            return
        for e in due:
            e.applied = True
        entry = due[-1]
        if answer is None:
            return
        err = bearing_error_deg(answer, leaf, env.goal_centroid)
        truth = geometric_direction(env, leaf, env.goal_centroid, base.sector_radius)
        hit = err <= tolerance_deg + 1e-9 or (accept_detours and answer.direction is truth)
        if entry.first_query_iteration is None:
            entry.first_query_iteration = iteration
            entry.first_answer = answer.direction.value
            entry.first_error_deg = err
            entry.first_matches_truth = answer.direction is truth
            entry.detected_first = hit
        if hit and entry.detection_iteration is None:
            entry.detection_iteration = iteration

    rec = run_cell(scenario, cell, base, planner_seed, oracle_seed, scenario_id, events=events,
                   keep_tree=keep_tree, on_answer=hook)
    last = rec.iterations
    for e in log:  # uniform-only iterations never reach the hook
        e.applied = e.applied or e.at_iteration <= last
    return rec, log


def detection_rate(logs: Iterable[Sequence[RelocationEntry]]) -> tuple[int, int]:
    """``(detected on first query, events that got at least one query)``."""
    hits = total = 0
    for log in logs:
        for e in log:
            if e.first_query_iteration is not None:
                total += 1
                hits += e.detected_first
    return hits, total


def run_dynamic_bench(n_scenarios: int, cell: CellSpec, base: PlannerConfig = PlannerConfig(goal_mode=BALL_OR_RECT),
                      seed: int = 0, n_events: int = 3, first_at: int = 20, spacing: int = 20,
                      keep_tree: bool = True, n_obstacles: tuple[int, int] = (8, 15),
                      params: ScenarioParams = ScenarioParams(), accept_detours: bool = True):
    """Relocation trials over ``n_scenarios`` worlds; returns records and logs."""
    cfg = BenchConfig(n_trials=n_scenarios, cells=(cell,), planner=base, seed=seed,
                      n_obstacles=n_obstacles, scenario=params)
    records, logs = [], []
    for k in range(n_scenarios):
        seeds = trial_seeds(seed, k)
        sc = random_relocations(bench_scenario(cfg, k), n_events, first_at, spacing, params)
        rec, log = run_dynamic_goal(sc, cell, base, seeds["planner"], seeds["oracle"], keep_tree,
                                    accept_detours=accept_detours, scenario_id=k)
        records.append(rec)
        logs.append(log)
    return records, logs


__all__ = [
    "BenchConfig", "BenchResult", "CellSpec", "RelocationEntry", "TrialRecord", "RRT", "RRT_STAR",
    "VLM_RRT", "ERROR", "ITERATION_LIMIT", "SUCCESS", "aggregate", "binomial_ci", "bench_scenario",
    "detection_rate", "emit_report", "format_rate", "format_table", "make_oracle", "paired_ratio",
    "parse_oracle_spec", "records_from_csv", "records_to_csv", "run_bench", "run_dynamic_bench",
    "run_dynamic_goal", "summarize", "trial_seeds",
]

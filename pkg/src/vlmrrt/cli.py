"""Command-line entry point: ``vlmrrt <subcommand> ...`` or ``python -m vlmrrt``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as B
from .env import InfeasibleScenario, ParseError, ScenarioParams, load_scenario, random_relocations, save_scenario
from .oracle import PROMPT_MODES, ZERO_SHOT, OracleError, RecordingOracle
from .planner_core import BALL_OR_RECT, STRICT_BALL, PlannerConfig, PlanResult, plan_rrt, plan_rrt_star
from .snapshot import export_figure, render_snapshot
from .tracker import CollisionInTrack, build_qp, track, tracking_problem
from .vlm_planner import plan_vlm_rrt

EXIT_OK = 0
EXIT_ITERATION_LIMIT = 1
EXIT_USAGE = 2
EXIT_ORACLE = 3

ALGOS = {"rrt": B.RRT, "rrt-star": B.RRT_STAR, "vlm-rrt": B.VLM_RRT}

log = logging.getLogger("vlmrrt")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# configuration: flags > config file > built-in defaults

def _load_config(path: str | None) -> B.BenchConfig:
    if not path:
        return B.BenchConfig()
    try:
        return B.BenchConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, TypeError) as exc:
        raise CliError(f"config {path}: {exc}") from None


_PLANNER_FLAGS = {
    "delta": "delta", "epsilon": "epsilon", "gamma": "gamma", "radius": "sector_radius",
    "aperture": "sector_aperture", "max_iterations": "max_iterations",
    "rewire_radius": "rewire_radius", "goal_mode": "goal_mode",
}


def _planner_config(args, cfg: B.BenchConfig, seed: int) -> PlannerConfig:
    over = {field: getattr(args, flag) for flag, field in _PLANNER_FLAGS.items()
            if getattr(args, flag, None) is not None}
    try:
        return dataclasses.replace(cfg.planner, rng_seed=seed, **over)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _seed(args, cfg: B.BenchConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _add_planner_flags(p: argparse.ArgumentParser) -> None:
    d = PlannerConfig()
    g = p.add_argument_group("planner")
    g.add_argument("--delta", type=float, help=f"steering step in m (default {d.delta:g})")
    g.add_argument("--epsilon", type=float, help=f"goal tolerance in m (default {d.epsilon:g})")
    g.add_argument("--gamma", type=float, help=f"oracle-step probability (default {d.gamma:g})")
    g.add_argument("--radius", type=float, help=f"sector radius in m (default {d.sector_radius:g})")
    g.add_argument("--aperture", type=float,
                   help=f"full sector aperture in degrees (default {d.sector_aperture:g})")
    g.add_argument("--max-iterations", type=int, help=f"iteration budget N (default {d.max_iterations})")
    g.add_argument("--rewire-radius", type=float, help=f"RRT* rewire radius in m (default {d.rewire_radius:g})")
    g.add_argument("--goal-mode", choices=[STRICT_BALL, BALL_OR_RECT],
                   help=f"goal test (default {BALL_OR_RECT}; {STRICT_BALL} is the bare epsilon ball)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--config", help="JSON config in the bench config schema")


def _add_oracle_flags(p: argparse.ArgumentParser, default: str = "geometric") -> None:
    p.add_argument("--oracle", default=default,
                   help="geometric | noisy:<p_wrong> | replay:<session.jsonl> | remote "
                        f"(default {default}; remote reads ORACLE_ENDPOINT, ORACLE_MODEL, ORACLE_API_KEY)")
    p.add_argument("--prompt-mode", default=ZERO_SHOT, choices=PROMPT_MODES,
                   help=f"prompt regime for the remote oracle (default {ZERO_SHOT})")


# --------------------------------------------------------------------------
# helpers

def _read_scenario(path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read scenario {path}: {exc}") from None
    try:
        return load_scenario(data)
    except ParseError as exc:
        raise CliError(f"{path}: {exc}") from None


def _read_plan(path: str) -> PlanResult:
    try:
        return PlanResult.from_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read plan {path}: {exc}") from None


def _write(path: str | None, data: str | bytes) -> None:
    if not path:
        return
    if isinstance(data, str):
        data = data.encode("utf-8")
    Path(path).write_bytes(data)


def _make_oracle(spec: str, seed: int, prompt_mode: str):
    try:
        return B.make_oracle(spec, seed, prompt_mode)
    except OracleError as exc:
        raise CliError(str(exc), EXIT_ORACLE) from None
    except OSError as exc:
        raise CliError(f"oracle: {exc}", EXIT_ORACLE) from None
    except ValueError as exc:
        raise CliError(str(exc)) from None


class _FailureCounter:
    def __init__(self):
        self.queries = self.failures = 0

    def __call__(self, iteration, env, leaf, answer):
        self.queries += 1
        self.failures += answer is None

    @property
    def all_failed(self) -> bool:
        return self.queries > 0 and self.failures == self.queries


def _run_planner(algo: str, scenario, cfg: PlannerConfig, oracle, keep_tree: bool,
                 counter: _FailureCounter | None = None) -> PlanResult:
    if algo == B.RRT:
        return plan_rrt(scenario.env, cfg, events=scenario.events)
    if algo == B.RRT_STAR:
        if scenario.events:
            log.warning("RRT* ignores goal relocation events")
        return plan_rrt_star(scenario.env, cfg)
    return plan_vlm_rrt(scenario.env, cfg, oracle, events=scenario.events, keep_tree=keep_tree,
                        on_answer=counter)


def _final_env(scenario, res: PlanResult):
    env = scenario.env
    for e in sorted(scenario.events, key=lambda e: e.at_iteration):
        if e.at_iteration <= res.iterations_used:
            env = env.with_goal(e.new_goal)
    return env


def _track_outputs(res: PlanResult, env, args) -> int:
    Q = args.q * np.eye(2)
    R = args.r * np.eye(2)
    corridor = not args.no_corridor
    if args.dump_qp:
        _write(args.dump_qp, build_qp(tracking_problem(res, env, Q=Q, R=R, corridor=corridor)).dump_text())
    try:
        report = track(res, env, Q=Q, R=R, corridor=corridor)
    except CollisionInTrack as exc:
        report = exc.report
        print(f"warning: tracked trajectory touches an obstacle at steps {report.collision_steps}",
              file=sys.stderr)
    _write(args.track_out, report.to_json())
    print(f"tracked T={len(report.reference)} mean error {report.mean_error:.3f} m, "
          f"endpoint {report.endpoint_goal_distance:.3f} m from goal centroid")
    return EXIT_OK


def _add_track_flags(p: argparse.ArgumentParser, out_flag: str) -> None:
    p.add_argument(out_flag, dest="track_out", help="write the tracking report JSON here")
    p.add_argument("--q", type=float, default=0.9, help="output tracking weight, Q = q*I (default 0.9)")
    p.add_argument("--r", type=float, default=0.1, help="control effort weight, R = r*I (default 0.1)")
    p.add_argument("--dump-qp", help="write the condensed H and f as dense text")
    p.add_argument("--no-corridor", action="store_true",
                   help="drop the obstacle separating rows from the QP")


# --------------------------------------------------------------------------
# subcommands

def cmd_scenario_gen(args) -> int:
    params = ScenarioParams(trap_fraction=args.trap_fraction)
    cfg = B.BenchConfig(n_trials=1, seed=args.seed, scenario=params)
    try:
        if args.obstacles is None:
            sc = B.bench_scenario(cfg, args.index)
        else:
            seeds = B.trial_seeds(args.seed, args.index)
            from .env import random_scenario

            sc = random_scenario(seeds["scenario"], args.obstacles, params=params)
        if args.relocations:
            sc = random_relocations(sc, args.relocations, args.first_at, args.spacing, params)
    except InfeasibleScenario as exc:
        raise CliError(str(exc), EXIT_ITERATION_LIMIT) from None
    data = save_scenario(sc)
    if args.out:
        _write(args.out, data)
        print(f"scenario with {len(sc.env.obstacles)} obstacles and {len(sc.events)} events -> {args.out}")
    else:
        sys.stdout.write(data.decode("utf-8"))
    return EXIT_OK


def cmd_plan(args) -> int:
    file_cfg = _load_config(args.config)
    seed = _seed(args, file_cfg)
    cfg = _planner_config(args, file_cfg, seed)
    scenario = _read_scenario(args.scenario)
    algo = ALGOS[args.algo]
    oracle = _make_oracle(args.oracle, seed, args.prompt_mode) if algo == B.VLM_RRT else None
    counter = _FailureCounter()
    res = _run_planner(algo, scenario, cfg, oracle, not args.reset_tree, counter)
    _write(args.out, res.to_json())
    length = f", length {res.path_length:.2f} m" if res.success else ""
    print(f"{args.algo}: {res.status} after {res.iterations_used} iterations, "
          f"{res.tree_size} vertices, {res.vlm_queries} oracle queries{length}")
    final_env = _final_env(scenario, res)
    if args.svg:
        _write(args.svg, export_figure(final_env, res, title=f"{args.algo} seed {seed}"))
    if args.png:
        _write(args.png, render_snapshot(final_env, res.tree).to_png())
    if counter.all_failed:
        print(f"error: all {counter.queries} oracle queries failed", file=sys.stderr)
        return EXIT_ORACLE
    if not res.success:
        return EXIT_ITERATION_LIMIT
    if args.track:
        return _track_outputs(res, final_env, args)
    return EXIT_OK


def cmd_track(args) -> int:
    scenario = _read_scenario(args.scenario)
    res = _read_plan(args.plan)
    if not res.success:
        raise CliError("the plan did not reach the goal; nothing to track", EXIT_ITERATION_LIMIT)
    return _track_outputs(res, _final_env(scenario, res), args)


def _parse_list(text: str | None, conv, name: str):
    if text is None:
        return None
    try:
        return [conv(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"--{name}: cannot parse {text!r}") from None


def cmd_bench(args) -> int:
    file_cfg = _load_config(args.config)
    seed = _seed(args, file_cfg)
    base = _planner_config(args, file_cfg, 0)
    gammas = _parse_list(args.gamma_sweep, float, "gamma-sweep")
    modes = _parse_list(args.prompt_modes, str, "prompt-modes")
    planners = _parse_list(args.planners, str, "planners")
    for m in modes or ():
        if m not in PROMPT_MODES:
            raise CliError(f"unknown prompt mode {m!r}")
    if planners is None:
        planners = ["vlm-rrt"] if gammas else None
    try:
        if planners is None and gammas is None and modes is None and args.oracle is None:
            cells = file_cfg.cells
        else:
            planners = planners or ["rrt", "rrt-star", "vlm-rrt"]
            oracle = args.oracle or "geometric"
            cells = []
            for name in planners:
                if name not in ALGOS:
                    raise CliError(f"unknown planner {name!r}; use {', '.join(ALGOS)}")
                if ALGOS[name] != B.VLM_RRT:
                    cells.append(B.CellSpec(ALGOS[name]))
                    continue
                for g in gammas or [None]:
                    for m in modes or [ZERO_SHOT]:
                        cells.append(B.CellSpec(B.VLM_RRT, oracle, g, m))
        cfg = dataclasses.replace(
            file_cfg, cells=tuple(cells), planner=base, seed=seed,
            n_trials=args.trials if args.trials is not None else file_cfg.n_trials,
            jobs=args.jobs if args.jobs is not None else file_cfg.jobs,
            csv_path=args.csv or file_cfg.csv_path, json_path=args.json or file_cfg.json_path,
            table_path=args.table or file_cfg.table_path)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    if any(c.oracle and c.oracle.startswith("remote") for c in cfg.cells):
        _make_oracle("remote", 0, ZERO_SHOT)  # fail fast on missing credentials

    if args.relocations:
        vlm = [c for c in cfg.cells if c.planner == B.VLM_RRT]
        if len(vlm) != 1:
            raise CliError("--relocations needs exactly one VLM-RRT cell")
        records, logs = B.run_dynamic_bench(cfg.n_trials, vlm[0], base, seed, args.relocations,
                                            keep_tree=not args.reset_tree, n_obstacles=cfg.n_obstacles,
                                            params=cfg.scenario)
        hits, total = B.detection_rate(logs)
        extra = {"relocation": {"detected_first": hits, "events_queried": total,
                                "detection_rate": hits / total if total else None,
                                "log": [[dataclasses.asdict(e) for e in lg] for lg in logs]}}
        _, _, table = B.emit_report(records, cfg.csv_path, cfg.json_path, cfg.table_path, extra)
        sys.stdout.write(table)
        print(f"detection on first query: {hits}/{total}")
        return EXIT_OK

    result = B.run_bench(cfg)
    _, _, table = B.emit_report(result.records, cfg.csv_path, cfg.json_path, cfg.table_path,
                                {"config": cfg.to_dict()})
    sys.stdout.write(table)
    return EXIT_OK


def cmd_render(args) -> int:
    scenario = _read_scenario(args.scenario)
    plan = _read_plan(args.plan) if args.plan else None
    if not (args.png or args.svg):
        raise CliError("render needs --png and/or --svg")
    if args.png:
        _write(args.png, render_snapshot(scenario.env, size=args.size).to_png())
    if args.svg:
        _write(args.svg, export_figure(scenario.env, plan, title=args.title))
    print("rendered " + " and ".join(p for p in (args.png, args.svg) if p))
    return EXIT_OK


def cmd_record_oracle(args) -> int:
    file_cfg = _load_config(args.config)
    seed = _seed(args, file_cfg)
    cfg = _planner_config(args, file_cfg, seed)
    scenario = _read_scenario(args.scenario)
    inner = _make_oracle(args.oracle, seed, args.prompt_mode)
    counter = _FailureCounter()
    with open(args.out, "w", encoding="utf-8") as sink:
        oracle = RecordingOracle(inner, sink)
        res = plan_vlm_rrt(scenario.env, cfg, oracle, events=scenario.events, on_answer=counter)
    _write(args.plan_out, res.to_json())
    print(f"recorded {counter.queries} exchanges ({counter.failures} failed) -> {args.out}; "
          f"plan {res.status} after {res.iterations_used} iterations")
    if counter.all_failed:
        return EXIT_ORACLE
    return EXIT_OK if res.success else EXIT_ITERATION_LIMIT


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vlmrrt", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario-gen", help="generate a random scenario JSON")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--index", type=int, default=0, help="scenario index under the seed (default 0)")
    p.add_argument("--obstacles", type=int, help="obstacle count (default: drawn from 8..15)")
    p.add_argument("--trap-fraction", type=float, default=ScenarioParams().trap_fraction,
                   help="probability of a cup obstacle before the goal (default %(default)s)")
    p.add_argument("--relocations", type=int, default=0, help="number of goal relocation events")
    p.add_argument("--first-at", type=int, default=20, help="iteration of the first relocation")
    p.add_argument("--spacing", type=int, default=20, help="iterations between relocations")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_scenario_gen)

    p = sub.add_parser("plan", help="run a planner on a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--algo", choices=list(ALGOS), default="vlm-rrt")
    _add_oracle_flags(p)
    _add_planner_flags(p)
    p.add_argument("--reset-tree", action="store_true", help="drop the tree when the goal moves")
    p.add_argument("--out", help="write the PlanResult JSON here")
    p.add_argument("--svg", help="write a vector figure of the result")
    p.add_argument("--png", help="write a raster snapshot of the final tree")
    p.add_argument("--track", action="store_true", help="also fit and track the planned path")
    _add_track_flags(p, "--track-out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("track", help="track a planned path with the QP controller")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True, help="PlanResult JSON from `plan --out`")
    _add_track_flags(p, "--out")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("bench", help="Monte Carlo comparison over random scenarios")
    _add_planner_flags(p)
    p.add_argument("--trials", type=int, help="scenarios per cell (default 100)")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--planners", help="comma list of rrt, rrt-star, vlm-rrt (default all three)")
    p.add_argument("--oracle", help="oracle for VLM-RRT cells (default geometric)")
    p.add_argument("--prompt-modes", help=f"comma list of {', '.join(PROMPT_MODES)}")
    p.add_argument("--gamma-sweep", help="comma list of gamma values, one VLM-RRT cell each")
    p.add_argument("--relocations", type=int, default=0,
                   help="run the goal-relocation experiment with this many events per scenario")
    p.add_argument("--reset-tree", action="store_true", help="drop the tree when the goal moves")
    p.add_argument("--csv", help="per-trial CSV path")
    p.add_argument("--json", help="summary JSON path")
    p.add_argument("--table", help="text table path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="draw a scenario (and optionally a plan)")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", help="PlanResult JSON to overlay (SVG only)")
    p.add_argument("--png", help="raster snapshot path")
    p.add_argument("--svg", help="vector figure path")
    p.add_argument("--size", type=int, default=512, help="raster size in pixels (default 512)")
    p.add_argument("--title")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("record-oracle", help="run VLM-RRT and log every oracle exchange as JSON lines")
    p.add_argument("--scenario", required=True)
    _add_oracle_flags(p, default="remote")
    _add_planner_flags(p)
    p.add_argument("--out", required=True, help="session JSONL path")
    p.add_argument("--plan-out", help="write the PlanResult JSON here")
    p.set_defaults(func=cmd_record_oracle)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        return exc.code
    except OracleError as exc:
        print(f"error: oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())

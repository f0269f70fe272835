import csv
import io
import json

import numpy as np
import pytest
from scipy import stats

from vlmrrt.bench import (ERROR, RECORD_FIELDS, RRT, RRT_STAR, VLM_RRT, BenchConfig, CellSpec, TrialRecord,
                          bench_scenario, binomial_ci, detection_rate, emit_report, format_rate,
                          format_table, make_oracle, paired_ratio, parse_oracle_spec, records_from_csv,
                          records_to_csv, run_bench, run_cell, run_dynamic_bench, run_dynamic_goal,
                          summarize, trial_seeds)
from vlmrrt.env import ScenarioEvent, random_relocations
from vlmrrt.oracle import GeometricOracle, NoisyOracle, ReplayOracle
from vlmrrt.planner_core import BALL_OR_RECT, PlannerConfig

from conftest import rect

SMALL = BenchConfig(n_trials=6, seed=3, cells=(CellSpec(RRT), CellSpec(RRT_STAR),
                                              CellSpec(VLM_RRT, "geometric", 0.85),
                                              CellSpec(VLM_RRT, "noisy:0.3", 0.5)))


@pytest.fixture(scope="module")
def small_result():
    return run_bench(SMALL)


def test_records_shape_and_determinism(small_result):
    recs = small_result.records
    assert len(recs) == 6 * 4
    assert [r.scenario_id for r in recs] == sorted(r.scenario_id for r in recs)
    assert run_bench(SMALL).records == recs
    assert all(r.status != ERROR for r in recs)


def test_parallel_matches_serial(small_result):
    import dataclasses
    par = run_bench(dataclasses.replace(SMALL, jobs=2))
    assert par.records == small_result.records


def test_trial_seeds_are_independent_of_n_trials():
    assert trial_seeds(0, 5) == trial_seeds(0, 5)
    assert len(set(trial_seeds(0, 5).values())) == 4
    import dataclasses
    a = bench_scenario(SMALL, 2)
    b = bench_scenario(dataclasses.replace(SMALL, n_trials=50), 2)
    assert a == b
    assert bench_scenario(SMALL, 1) != a


def test_cells_share_the_scenario():
    sc = bench_scenario(SMALL, 0)
    seeds = trial_seeds(SMALL.seed, 0)
    base = SMALL.planner
    a = run_cell(sc, CellSpec(RRT), base, seeds["planner"], seeds["oracle"], 0)
    b = run_cell(sc, CellSpec(VLM_RRT, "geometric", 0.0), base, seeds["planner"], seeds["oracle"], 0)
    # gamma 0 on the same scenario and planner seed is plain RRT
    assert (a.status, a.iterations, a.path_length) == (b.status, b.iterations, b.path_length)


def test_csv_roundtrip(small_result):
    text = records_to_csv(small_result.records)
    assert text.splitlines()[0].split(",") == RECORD_FIELDS
    assert "\r\n" in text
    assert records_from_csv(text) == small_result.records


def test_double_entry_aggregation(small_result):
    """Recompute the summary straight from the CSV text with the stdlib reader."""
    rows = list(csv.DictReader(io.StringIO(records_to_csv(small_result.records))))
    by = {}
    for row in rows:
        key = (row["planner"], row["oracle_kind"] or None, row["prompt_mode"] or None,
               float(row["gamma"]) if row["gamma"] else None)
        by.setdefault(key, []).append(row)
    summary = summarize(small_result.records)
    assert summary["n_records"] == len(rows)
    for cell in summary["cells"]:
        group = by[(cell["planner"], cell["oracle_kind"], cell["prompt_mode"], cell["gamma"])]
        ok = [g for g in group if g["status"] == "Success"]
        assert cell["n"] == len(group) and cell["successes"] == len(ok)
        assert cell["mean_iterations_all"] == pytest.approx(np.mean([int(g["iterations"]) for g in group]), abs=1e-9)
        if ok:
            assert cell["mean_iterations_success"] == pytest.approx(
                np.mean([int(g["iterations"]) for g in ok]), abs=1e-9)
            assert cell["mean_path_length"] == pytest.approx(
                np.mean([float(g["path_length"]) for g in ok]), abs=1e-9)
        assert cell["mean_vlm_queries"] == pytest.approx(np.mean([int(g["vlm_queries"]) for g in group]), abs=1e-9)


def test_paired_ratio_by_hand():
    recs = [TrialRecord(0, RRT, None, None, None, "IterationLimit", 100, None, 0),
            TrialRecord(1, RRT, None, None, None, "Success", 50, 10.0, 0),
            TrialRecord(0, VLM_RRT, "geometric", "ZeroShot", 0.5, "Success", 30, 9.0, 12),
            TrialRecord(2, VLM_RRT, "geometric", "ZeroShot", 0.5, "Success", 900, 9.0, 12)]
    # only scenario 0 is shared
    assert paired_ratio(recs, (VLM_RRT, "geometric", "ZeroShot", 0.5), (RRT, None, None, None)) == 0.3
    s = summarize(recs)
    vlm = next(c for c in s["cells"] if c["planner"] == VLM_RRT)
    assert vlm["paired_iteration_ratio_vs_rrt"] == 0.3


def test_binomial_ci_matches_scipy():
    lo, hi = binomial_ci(47, 50)
    ref = stats.binomtest(47, 50).proportion_ci(method="exact")
    assert (lo, hi) == (ref.low, ref.high)
    assert binomial_ci(0, 10)[0] == 0.0 and binomial_ci(10, 10)[1] == 1.0


def test_format_rate():
    assert format_rate(47, 50) == "94% (47/50)"
    assert format_rate(0, 3) == "0% (0/3)"
    assert format_rate(2, 3) == "67% (2/3)"


def test_table_and_report(tmp_path, small_result):
    one = [TrialRecord(0, RRT, None, None, None, "IterationLimit", 500, None, 0)]
    table = format_table(summarize(one))
    assert len(table.splitlines()) == 3  # header, rule, one row
    assert "0% (0/1)" in table and table.splitlines()[2].split()[-1] == "-"
    csv_p, json_p, tab_p = tmp_path / "r.csv", tmp_path / "s.json", tmp_path / "t.txt"
    text, summary, tab = emit_report(small_result.records, csv_p, json_p, tab_p, {"seed": 3})
    assert csv_p.read_bytes() == text.encode()
    assert json.loads(json_p.read_text())["seed"] == 3
    assert tab_p.read_text() == tab
    assert all(line == line.rstrip() for line in tab.splitlines())
    with pytest.raises(ValueError):
        emit_report([])


def test_record_validation():
    with pytest.raises(ValueError):
        TrialRecord(0, RRT, None, None, None, "Success", 5, None, 0)
    with pytest.raises(ValueError):
        TrialRecord(0, RRT, None, None, None, "IterationLimit", 5, 3.0, 0)
    a = TrialRecord(0, RRT, None, None, None, "IterationLimit", 5, None, 0, wall_time=1.0)
    assert a == TrialRecord(0, RRT, None, None, None, "IterationLimit", 5, None, 0, wall_time=2.0)


def test_cell_and_oracle_specs(tmp_path):
    with pytest.raises(ValueError):
        CellSpec("Dijkstra")
    with pytest.raises(ValueError):
        CellSpec(VLM_RRT)
    with pytest.raises(ValueError):
        parse_oracle_spec("noisy:1.5")
    with pytest.raises(ValueError):
        parse_oracle_spec("replay")
    assert isinstance(make_oracle("geometric"), GeometricOracle)
    assert make_oracle("noisy:0.25").p_wrong == 0.25
    (tmp_path / "7.jsonl").write_text('{"answer": {"direction": "N"}}\n')
    assert isinstance(make_oracle(f"replay:{tmp_path}", scenario_id=7), ReplayOracle)


def test_failures_are_recorded_not_dropped(tmp_path):
    cfg = BenchConfig(n_trials=2, cells=(CellSpec(RRT), CellSpec(VLM_RRT, f"replay:{tmp_path}/missing.jsonl")))
    recs = run_bench(cfg).records
    assert len(recs) == 4
    assert [r.status for r in recs if r.planner == VLM_RRT] == [ERROR, ERROR]


def test_config_roundtrip_and_unknown_keys():
    d = SMALL.to_dict()
    assert BenchConfig.from_dict(json.loads(json.dumps(d))) == SMALL
    with pytest.raises(ValueError, match="unknown"):
        BenchConfig.from_dict({"trials": 3})


# -- goal relocation --------------------------------------------------------

def test_geometric_oracle_detects_immediately():
    recs, logs = run_dynamic_bench(6, CellSpec(VLM_RRT, "geometric", 0.85), seed=1)
    hits, total = detection_rate(logs)
    assert total > 0 and hits == total
    for log in logs:
        for e in log:
            if e.first_query_iteration is not None:
                assert e.first_matches_truth and e.iterations_to_detection >= 0


def test_late_events_are_ignored(walled_env):
    from vlmrrt.env import Scenario
    sc = Scenario(walled_env, (ScenarioEvent(10, rect(20, 20, 30, 30)), ScenarioEvent(10_000, rect(40, 400, 50, 410))))
    base = PlannerConfig(max_iterations=400, goal_mode=BALL_OR_RECT)
    rec, log = run_dynamic_goal(sc, CellSpec(VLM_RRT, "geometric", 0.85), base)
    assert log[0].applied and not log[1].applied
    assert log[1].first_query_iteration is None
    assert detection_rate([log]) == (1, 1)


def test_reset_tree_restarts_from_the_root(walled_env):
    from vlmrrt.env import Scenario
    sc = Scenario(walled_env, (ScenarioEvent(50, rect(0, 0, 60, 60)),))
    base = PlannerConfig(max_iterations=3000, goal_mode=BALL_OR_RECT)
    cell = CellSpec(VLM_RRT, "geometric", 0.85)
    kept, _ = run_dynamic_goal(sc, cell, base, keep_tree=True)
    reset, _ = run_dynamic_goal(sc, cell, base, keep_tree=False)
    assert kept.success and reset.success
    # same streams until the event, then the reset tree lacks the early vertices
    assert kept.iterations != reset.iterations or kept.path_length != reset.path_length
    rrt_kept = run_cell(sc, CellSpec(RRT), base, 0, 0, 0, events=sc.events, keep_tree=True)
    rrt_reset = run_cell(sc, CellSpec(RRT), base, 0, 0, 0, events=sc.events, keep_tree=False)
    assert (rrt_kept.iterations, rrt_kept.path_length) != (rrt_reset.iterations, rrt_reset.path_length)

import csv
import json
import shutil
import subprocess
import sys

import pytest

from vlmrrt.cli import main
from vlmrrt.env import load_scenario
from vlmrrt.oracle.mock_server import MockVisionServer, scripted
from vlmrrt.planner_core import PlanResult


@pytest.fixture
def scen(tmp_path):
    path = tmp_path / "s.json"
    assert main(["scenario-gen", "--seed", "0", "--index", "4", "--out", str(path)]) == 0
    return path


def test_scenario_gen_is_deterministic(tmp_path, capsys):
    assert main(["scenario-gen", "--seed", "2", "--relocations", "2"]) == 0
    a = capsys.readouterr().out
    assert main(["scenario-gen", "--seed", "2", "--relocations", "2"]) == 0
    assert capsys.readouterr().out == a
    sc = load_scenario(a)
    assert len(sc.events) == 2 and 8 <= len(sc.env.obstacles) <= 15 + 3


def test_plan_happy_path(scen, tmp_path, capsys):
    out, svg, png = tmp_path / "p.json", tmp_path / "p.svg", tmp_path / "p.png"
    code = main(["plan", "--scenario", str(scen), "--algo", "vlm-rrt", "--max-iterations", "3000",
                 "--out", str(out), "--svg", str(svg), "--png", str(png)])
    assert code == 0
    res = PlanResult.from_json(out.read_text())
    assert res.success and "Success" in capsys.readouterr().out
    assert svg.read_bytes().startswith(b"<?xml") and png.read_bytes()[:4] == b"\x89PNG"


def test_plan_is_deterministic(scen, tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / f"p{k}.json"
        assert main(["plan", "--scenario", str(scen), "--algo", "rrt", "--seed", "5",
                     "--max-iterations", "4000", "--out", str(p)]) in (0, 1)
        d = json.loads(p.read_text())
        d.pop("wall_time")
        outs.append(d)
    assert outs[0] == outs[1]


def test_plan_then_track_equals_plan_with_track(scen, tmp_path):
    plan, t1, t2 = tmp_path / "p.json", tmp_path / "t1.json", tmp_path / "t2.json"
    args = ["--scenario", str(scen), "--algo", "vlm-rrt", "--max-iterations", "3000"]
    assert main(["plan", *args, "--out", str(plan), "--track", "--track-out", str(t1)]) == 0
    assert main(["track", "--scenario", str(scen), "--plan", str(plan), "--out", str(t2)]) == 0
    assert json.loads(t1.read_text()) == json.loads(t2.read_text())


def test_dump_qp(scen, tmp_path):
    plan, dump = tmp_path / "p.json", tmp_path / "qp.txt"
    assert main(["plan", "--scenario", str(scen), "--max-iterations", "3000", "--out", str(plan)]) == 0
    assert main(["track", "--scenario", str(scen), "--plan", str(plan), "--dump-qp", str(dump)]) == 0
    lines = dump.read_text().splitlines()
    n = int(lines[0].split("=")[1])
    assert lines[1] == "H" and len(lines[2].split()) == n


def test_usage_errors(scen, tmp_path, capsys):
    assert main(["plan", "--scenario", str(scen), "--bogus"]) == 2
    assert main([]) == 2
    assert main(["plan", "--scenario", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"bounds": [0, 0, 1]}')
    assert main(["plan", "--scenario", str(bad)]) == 2
    assert main(["plan", "--scenario", str(scen), "--gamma", "2"]) == 2
    assert main(["render", "--scenario", str(scen)]) == 2
    assert "error" in capsys.readouterr().err


def test_iteration_limit_exit_code(scen):
    assert main(["plan", "--scenario", str(scen), "--algo", "rrt", "--max-iterations", "3"]) == 1


def test_oracle_failure_exit_code(scen, monkeypatch):
    monkeypatch.delenv("ORACLE_ENDPOINT", raising=False)
    assert main(["plan", "--scenario", str(scen), "--oracle", "remote"]) == 3
    with MockVisionServer(scripted([(500, "down")])) as srv:
        monkeypatch.setenv("ORACLE_ENDPOINT", srv.url)
        monkeypatch.setenv("ORACLE_MODEL", "m")
        assert main(["plan", "--scenario", str(scen), "--oracle", "remote", "--max-iterations", "4",
                     "--gamma", "1"]) == 3


def test_bench_gamma_sweep(tmp_path, capsys):
    out = tmp_path / "b.csv"
    code = main(["bench", "--trials", "3", "--gamma-sweep", "1,0.9,0.8,0.7,0.6,0.5",
                 "--oracle", "noisy:0.2", "--csv", str(out), "--json", str(tmp_path / "b.json")])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    cells = {(r["planner"], r["gamma"]) for r in rows}
    assert len(rows) == 18 and len(cells) == 6
    assert capsys.readouterr().out.count("VLM-RRT") == 6


def test_bench_default_matrix_and_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_trials": 2, "seed": 9, "planner": {"max_iterations": 50,
                                                                    "goal_mode": "ball_or_rect"}}))
    out = tmp_path / "b.csv"
    assert main(["bench", "--config", str(cfg), "--csv", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6 and all(int(r["iterations"]) <= 50 for r in rows)
    # a flag beats the file
    assert main(["bench", "--config", str(cfg), "--max-iterations", "7", "--csv", str(out)]) == 0
    assert all(int(r["iterations"]) <= 7 for r in csv.DictReader(out.open()))
    cfg.write_text('{"trails": 2}')
    assert main(["bench", "--config", str(cfg)]) == 2


def test_bench_relocations(tmp_path, capsys):
    js = tmp_path / "r.json"
    assert main(["bench", "--trials", "3", "--planners", "vlm-rrt", "--relocations", "2",
                 "--json", str(js)]) == 0
    rel = json.loads(js.read_text())["relocation"]
    assert rel["events_queried"] >= 1 and rel["detected_first"] == rel["events_queried"]


def test_render(scen, tmp_path):
    png, svg = tmp_path / "r.png", tmp_path / "r.svg"
    assert main(["render", "--scenario", str(scen), "--png", str(png), "--svg", str(svg),
                 "--size", "128", "--title", "t"]) == 0
    assert png.stat().st_size > 0 and b"<title>t</title>" in svg.read_bytes()


def test_record_then_replay(scen, tmp_path, monkeypatch):
    session, plan_a, plan_b = tmp_path / "s.jsonl", tmp_path / "a.json", tmp_path / "b.json"
    replies = ["DIRECTION: N", "DIRECTION: E", "junk", "junk", "junk", "DIRECTION: SE"]
    with MockVisionServer(scripted(replies)) as srv:
        monkeypatch.setenv("ORACLE_ENDPOINT", srv.url)
        monkeypatch.setenv("ORACLE_MODEL", "m")
        code = main(["record-oracle", "--scenario", str(scen), "--out", str(session),
                     "--plan-out", str(plan_a), "--max-iterations", "25", "--seed", "1"])
    assert code in (0, 1)
    entries = [json.loads(line) for line in session.read_text().splitlines()]
    assert entries and any("error" in e for e in entries)
    code_b = main(["plan", "--scenario", str(scen), "--oracle", f"replay:{session}", "--out", str(plan_b),
                   "--max-iterations", "25", "--seed", "1"])
    assert code_b == code
    a, b = json.loads(plan_a.read_text()), json.loads(plan_b.read_text())
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b


def test_entry_points(scen):
    r = subprocess.run([sys.executable, "-m", "vlmrrt", "plan", "--scenario", str(scen), "--algo",
                        "rrt", "--max-iterations", "2"], capture_output=True, text=True)
    assert r.returncode == 1 and "IterationLimit" in r.stdout
    exe = shutil.which("vlmrrt")
    if exe:
        assert subprocess.run([exe, "--help"], capture_output=True).returncode == 0

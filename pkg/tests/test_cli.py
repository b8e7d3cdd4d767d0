import json

import pytest

from patrolroute.cli import main
from patrolroute.learner import PolicyParams
from patrolroute.metrics import CoverageReport, parse_table


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_gen_map_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        code, _ = run(capsys, "gen-map", "--rows", 20, "--cols", 20, "--hotspots", 3, "--seed", 7, "--out", out)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_map_bad_spec(tmp_path, capsys):
    code, io = run(capsys, "gen-map", "--rows", 0, "--out", tmp_path / "m.json")
    assert code == 2
    assert "config error" in io.err


def test_gen_map_dense_edge_count(tmp_path, capsys):
    code, io = run(capsys, "gen-map", "--rows", 20, "--cols", 20, "--density", 1.0, "--out", tmp_path / "m.json")
    assert code == 0
    nodes, edges, _ = io.out.splitlines()[1].split()[1:]
    assert (int(nodes), int(edges)) == (400, 2 * 20 * 19)


def test_simulate_greedy_best_has_zero_entropy(tmp_path, capsys):
    out = tmp_path / "sim"
    code, io = run(capsys, "simulate", "--policy", "greedy", "--start-mode", "best", "--num-runs", 5, "--out", out)
    assert code == 0
    (row,) = parse_table((out / "table.tsv").read_text())
    assert row["entropy"] == 0.0 and row["start"] == "best"
    assert "\t0.00\n" in io.out
    assert CoverageReport.load(out / "report.json").entropy == 0.0
    assert len(list((out / "episodes").iterdir())) == 5
    heat = (out / "heatmap.tsv").read_text().splitlines()
    assert len(heat) == 20 and sum(int(v) for ln in heat for v in ln.split("\t")) == 5 * 5 * 51
    assert json.loads((out / "config.json").read_text())["policy"] == "greedy"


def test_simulate_single_random_run(tmp_path, capsys):
    out = tmp_path / "sim"
    code, _ = run(capsys, "simulate", "--policy", "random", "--num-runs", 1, "--out", out)
    assert code == 0
    assert [p.name for p in (out / "episodes").iterdir()] == ["run_000.json"]


def test_simulate_rejects_mismatched_policy_schema(tmp_path, capsys):
    bad = tmp_path / "p.json"
    p = PolicyParams.initial(4, 0)
    bad.write_text(p.dumps().replace(p.schema_hash, "f" * 16))
    code, io = run(capsys, "simulate", "--policy", f"trained:{bad}", "--num-runs", 1, "--out", tmp_path / "s")
    assert code == 3
    assert "schema" in io.err


@pytest.mark.parametrize(
    "argv, code",
    [
        (["simulate", "--policy", "oracle"], 2),
        (["simulate", "--start-mode", "middle"], 2),
        (["simulate", "--map", "/nonexistent/map.json"], 3),
        (["simulate", "--num-agents", "0"], 2),
    ],
)
def test_error_exit_codes(tmp_path, capsys, argv, code):
    assert run(capsys, *argv, "--num-runs", 1, "--out", tmp_path / "x")[0] == code


def test_bad_map_file_is_data_error(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text('{"rows": 1, "cols": 1, "cell_side_m": 50.0, "cells": [{"road": 1, "crime": -1, "zone": 1}]}')
    assert run(capsys, "simulate", "--map", m, "--num-runs", 1, "--out", tmp_path / "x")[0] == 3


def test_train_zero_updates_writes_valid_policy(tmp_path, capsys):
    out = tmp_path / "t"
    code, _ = run(capsys, "train", "--total-updates", 0, "--out", out)
    assert code == 0
    PolicyParams.load(out / "policy.json")
    assert (out / "curve.jsonl").read_text() == ""


def test_train_identical_seeds_identical_files(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "train", "--map", "city10", "--total-updates", 2, "--episodes-per-update", 2, "--seed", 4, "--out", tmp_path / name)
    for f in ("policy.json", "curve.jsonl", "config.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_curve_has_one_record_per_update(tmp_path, capsys):
    out = tmp_path / "t"
    code, io = run(capsys, "train", "--map", "city10", "--total-updates", 4, "--out", out)
    assert code == 0
    records = [json.loads(ln) for ln in (out / "curve.jsonl").read_text().splitlines()]
    assert [r["update"] for r in records] == [0, 1, 2, 3]
    assert "final mean joint reward" in io.out


def test_evaluate_greedy_beats_random(tmp_path, capsys):
    out = tmp_path / "e"
    code, _ = run(capsys, "evaluate", "--policies", "greedy", "random", "--num-runs", 30, "--out", out)
    assert code == 0
    greedy, rand = parse_table((out / "comparison.tsv").read_text())
    assert greedy["policy"] == "greedy" and rand["policy"] == "random"
    assert greedy["W_3"] >= rand["W_3"]


def test_evaluate_rows_per_triple(tmp_path, capsys):
    out = tmp_path / "e"
    code, _ = run(
        capsys, "evaluate", "--policies", "greedy", "--starts", "random", "best", "--agent-counts", 2, 5,
        "--num-runs", 3, "--out", out,
    )
    assert code == 0
    rows = parse_table((out / "comparison.tsv").read_text())
    assert [(r["start"], r["patrols"]) for r in rows] == [("random", 2), ("random", 5), ("best", 2), ("best", 5)]


def test_evaluate_single_and_empty(tmp_path, capsys):
    code, _ = run(capsys, "evaluate", "--policies", "random", "--num-runs", 2, "--out", tmp_path / "e")
    assert code == 0
    assert len(parse_table((tmp_path / "e" / "comparison.tsv").read_text())) == 1
    assert run(capsys, "evaluate", "--policies", "--out", tmp_path / "f")[0] == 2


def test_config_file_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("num_runs: 3\nnum_agents: 2\npolicy: random\n")
    monkeypatch.setenv("PATROLROUTE_OUT", str(tmp_path / "envout"))
    code, _ = run(capsys, "simulate", "--config", cfg, "--num-runs", 2)
    assert code == 0
    echoed = json.loads((tmp_path / "envout" / "config.json").read_text())
    assert (echoed["num_runs"], echoed["num_agents"], echoed["policy"]) == (2, 2, "random")
    cfg.write_text("agents: 2\n")
    assert run(capsys, "simulate", "--config", cfg)[0] == 2


def test_jobs_do_not_change_results(tmp_path, capsys):
    for name, jobs in (("one", 1), ("two", 2)):
        run(capsys, "simulate", "--policy", "random", "--num-runs", 6, "--jobs", jobs, "--out", tmp_path / name)
    assert (tmp_path / "one" / "report.json").read_bytes() == (tmp_path / "two" / "report.json").read_bytes()

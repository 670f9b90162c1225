import json
import subprocess
import sys

import pytest

from ambrl.cli import main, parse_env, parse_seeds
from ambrl.mdp import load

SJ = "sj:n=6,delta_min=0.1"


def test_parse_helpers():
    assert parse_env("random:levels=3/4,A=2,seed=1") == {"kind": "random", "levels": [3, 4], "A": 2, "seed": 1}
    assert parse_env("random:levels=3,A=2")["levels"] == [3]
    assert parse_seeds("3") == (0, 1, 2)
    assert parse_seeds("3", base=5) == (5, 6, 7)
    assert parse_seeds("4,2") == (4, 2)
    assert parse_seeds("2:5") == (2, 3, 4)


def test_gen_and_solve(tmp_path, capsys):
    out = tmp_path / "sj.json"
    assert main(["gen", SJ, "--out", str(out)]) == 0
    assert load(out).num_states == 6
    assert main(["solve", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["v0_star"] == pytest.approx(0.6)
    assert doc["gap_min"] == pytest.approx(0.1)
    assert doc["states"]["s2"]["gaps"] == pytest.approx([0.0, 0.6])


def test_solve_reports_null_gap(capsys):
    assert main(["solve", "tree:n=2,A=2,gamma=0.1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["states"]["x2"]["gap_min_local"] == 0.0


def test_run_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["run", "--env", SJ, "--episodes", "3000", "--seeds", "2", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert summary["seeds"] == [0, 1]


def test_run_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"env": {"kind": "sj", "n": 5, "delta_min": 0.1}, "algo": "ucb",
                               "episodes": 100, "seeds": [4]}))
    assert main(["run", "--config", str(cfg), "--episodes", "50"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["algo"] == "ucb" and doc["episodes"] == 50 and doc["seeds"] == [4]


def test_compare_order_independent(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["compare", "--env", SJ, "--episodes", "2000", "--seeds", "0,1,2", "--out", str(a)]) == 0
    assert main(["compare", "--env", SJ, "--episodes", "2000", "--seeds", "2,0,1", "--out", str(b)]) == 0
    for name in ("amb.csv", "ucb.csv", "compare.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_error_line(capsys):
    assert main(["gen", "nowhere"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "CliError"
    assert main(["run", "--env", "sj:n=2,delta_min=0.1"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ValueError"
    assert main(["frobnicate"]) == 2


def test_check_subcommand(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "ambrl", "solve", SJ], capture_output=True, text=True, check=True)
    assert json.loads(p.stdout)["v0_star"] == pytest.approx(0.6)

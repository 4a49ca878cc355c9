import json
import shlex

import numpy as np
import pytest

from activeplan import cli
from activeplan.scenario import generate_scenario, load_trajectory, save_scenario, save_trajectory
from activeplan.transcription import Trajectory


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def parse(line):
    return dict(item.split("=", 1) for item in shlex.split(line))


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    return tmp_path


@pytest.fixture
def free_scenario(tmp_path):
    return save_scenario(generate_scenario(7, "point-mass-2d", 0), tmp_path / "free.json")


@pytest.fixture
def blocked_scenario(tmp_path):
    return save_scenario(generate_scenario(7, "point-mass-2d", 5), tmp_path / "blocked.json")


def test_gen_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "gen", "--seed", 7, "--model", "point-mass", "--n-obs", 5, "--out", a)[0] == 0
    assert run(capsys, "gen", "--seed", 7, "--model", "point-mass", "--n-obs", 5, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_default_path_uses_env(capsys, out_dir):
    code, out, _ = run(capsys, "gen", "--seed", 1, "--n-obs", 2)
    assert code == 0
    path = parse(out)["path"]
    assert path.startswith(str(out_dir))


def test_gen_negative_count_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen", "--seed", "7", "--n-obs", "-1"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_gen_generation_failure_exit_one(capsys, tmp_path):
    code, out, _ = run(capsys, "gen", "--seed", 0, "--n-obs", 3, "--epsilon", 50, "--out", tmp_path / "x.json")
    assert code == 1
    assert parse(out)["status"] == "failed"


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve", "x.json", "--bogus"])
    assert exc.value.code == 2


def test_solve_obstacle_free(capsys, free_scenario, out_dir):
    code, out, _ = run(capsys, "solve", free_scenario)
    assert code == 0
    assert len(out.strip().splitlines()) == 1
    fields = parse(out)
    assert list(fields) == ["status", "method", "t_f", "iterations", "active", "wall_time", "scenario", "trajectory"]
    assert fields["status"] == "solved"
    assert float(fields["t_f"]) == pytest.approx(2.0, abs=0.02)
    traj, kind = load_trajectory(fields["trajectory"])
    assert kind == "point-mass-2d" and traj.n == 100


def test_solve_unreachable_budget_fails(capsys, blocked_scenario, out_dir):
    code, out, _ = run(capsys, "solve", blocked_scenario, "--max-outer", 1, "--max-inner", 2)
    assert code == 1
    fields = parse(out)
    assert fields["status"] == "solver_failure" and fields["trajectory"] == "-"


def test_solve_methods_share_scenario_hash(capsys, blocked_scenario, out_dir):
    _, a, _ = run(capsys, "solve", blocked_scenario, "--method", "iterative")
    _, b, _ = run(capsys, "solve", blocked_scenario, "--method", "baseline")
    assert parse(a)["scenario"] == parse(b)["scenario"]
    assert parse(a)["method"] == "iterative" and parse(b)["method"] == "baseline"


def test_solve_malformed_scenario_is_usage_error(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "solve", bad)
    assert code == 2 and "invalid JSON" in err


def test_check_passes_and_fails(capsys, blocked_scenario, out_dir, tmp_path):
    _, out, _ = run(capsys, "solve", blocked_scenario)
    traj_path = parse(out)["trajectory"]
    code, out, _ = run(capsys, "check", traj_path, blocked_scenario)
    assert code == 0
    lines = out.strip().splitlines()
    assert [parse(l).get("category") for l in lines[:-1]] == ["defects", "boundary", "bounds", "clearance", "dt"]
    assert parse(lines[-1])["status"] == "pass"

    traj, kind = load_trajectory(traj_path)
    scenario = generate_scenario(7, "point-mass-2d", 5)
    traj.states[30, :2] = scenario.obstacles[2].center
    bad = save_trajectory(traj, tmp_path / "bad.json", kind)
    code, out, _ = run(capsys, "check", bad, blocked_scenario)
    assert code == 1
    assert "node 30" in out and "obstacle 2" in out


def test_check_model_mismatch(capsys, tmp_path):
    quad = save_scenario(generate_scenario(1, "quadrotor-3d", 0), tmp_path / "q.json")
    t = save_trajectory(Trajectory(np.zeros((3, 4)), np.zeros((2, 2)), 1.0), tmp_path / "t.json", "point-mass-2d")
    code, _, err = run(capsys, "check", t, quad)
    assert code == 2 and "does not match" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["gen", "--seed", "3", "--dry-run"],
        ["solve", "anything.json", "--dry-run"],
        ["check", "t.json", "s.json", "--dry-run"],
        ["report", "somewhere", "--dry-run"],
    ],
)
def test_dry_run_prints_config(capsys, argv):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert parse(out)["command"] == argv[0]


@pytest.fixture
def mini_config(tmp_path):
    path = tmp_path / "mini.json"
    path.write_text(json.dumps({"ladder": [5], "per_rung": 3, "base_seed": 2}))
    return path


def test_bench_dry_run(capsys, mini_config, tmp_path):
    code, out, _ = run(capsys, "bench", mini_config, "--out-dir", tmp_path / "b", "--dry-run")
    assert code == 0
    fields = parse(out)
    assert fields["ladder"] == "5" and fields["per_rung"] == "3"
    assert not (tmp_path / "b").exists()


def test_bench_bad_config(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"ladder": [5], "flavour": "x"}))
    assert run(capsys, "bench", path)[0] == 2


def test_bench_and_report(capsys, mini_config, tmp_path):
    store = tmp_path / "store"
    code, out, _ = run(capsys, "bench", mini_config, "--out-dir", store)
    assert code == 0
    assert len(out.strip().splitlines()) == 7
    code, out, _ = run(capsys, "report", store)
    assert code == 0
    summary = (store / "summary.csv").read_text().splitlines()
    assert [l.split(",")[1] for l in summary[1:]] == ["iterative", "baseline"]
    first = (store / "summary.csv").read_bytes()
    run(capsys, "report", store)
    assert (store / "summary.csv").read_bytes() == first

    # interrupted store: drop the last two records
    lines = (store / "records.jsonl").read_text().splitlines(keepends=True)
    (store / "records.jsonl").write_text("".join(lines[:-2]))
    code, out, _ = run(capsys, "report", store, "--no-timing")
    assert code == 0 and parse(out)["missing"] == "2"
    assert "missing: 2" in (store / "notes.txt").read_text()
    assert (store / "summary.csv").read_text().splitlines()[1].split(",")[2] == ""


def test_report_unusable_store(capsys, tmp_path):
    code, out, _ = run(capsys, "report", tmp_path / "nowhere")
    assert code == 1 and parse(out)["status"] == "failed"
    (tmp_path / "records.jsonl").write_text("{}\n")
    code, out, _ = run(capsys, "report", tmp_path)
    assert code == 1

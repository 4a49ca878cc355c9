import json

import numpy as np
import pytest

from activeplan.scenario import (
    GenerationError,
    InvariantError,
    MalformedFileError,
    SchemaVersionError,
    Scenario,
    generate_scenario,
    load_scenario,
    load_trajectory,
    save_scenario,
    save_trajectory,
    scenario_to_json,
)
from activeplan.transcription import Obstacle, Trajectory


def clear_of_boundaries(s):
    for o in s.obstacles:
        for x in (s.x_initial, s.x_final):
            if np.hypot(*(x[:2] - np.array(o.center))) <= o.radius + s.epsilon:
                return False
    return True


def test_zero_obstacles_any_seed():
    for seed in (0, 1, 2**63, 2**64 - 1):
        s = generate_scenario(seed, "point-mass-2d", 0)
        assert s.n_obs == 0


def test_same_seed_same_bytes():
    a = scenario_to_json(generate_scenario(42, "quadrotor-3d", 30))
    b = scenario_to_json(generate_scenario(42, "quadrotor-3d", 30))
    assert a == b


def test_different_seeds_differ():
    a = generate_scenario(1, "point-mass-2d", 5)
    b = generate_scenario(2, "point-mass-2d", 5)
    assert a.obstacles != b.obstacles


def test_prefix_stability_across_counts():
    # the stream is consumed obstacle by obstacle, so fewer obstacles is a prefix
    short = generate_scenario(9, "point-mass-2d", 5).obstacles
    long = generate_scenario(9, "point-mass-2d", 20).obstacles
    assert long[:5] == short


def test_draw_distribution_and_bounds():
    s = generate_scenario(3, "point-mass-2d", 100)
    C = np.array([o.center for o in s.obstacles])
    R = np.array([o.radius for o in s.obstacles])
    assert np.all((C >= 0) & (C <= 10))
    assert np.all((R >= 0.1) & (R <= 0.2))
    # total area well inside the footprint
    assert np.sum(np.pi * R**2) <= 12.6


def test_boundary_states():
    pm = generate_scenario(0, "point-mass", 0)
    np.testing.assert_array_equal(pm.x_initial, [0, 0, 0, 0])
    np.testing.assert_array_equal(pm.x_final, [10, 10, 0, 0])
    q = generate_scenario(0, "quadrotor", 0)
    assert q.x_initial.shape == (13,)
    np.testing.assert_array_equal(q.x_initial[:7], [0, 0, 5, 1, 0, 0, 0])
    np.testing.assert_array_equal(q.x_final[:7], [10, 10, 5, 1, 0, 0, 0])
    assert q.bounds_max == (10.0, 10.0, 10.0)


def test_boundary_clearance_over_many_seeds():
    for seed in range(10_000):
        assert clear_of_boundaries(generate_scenario(seed, "point-mass-2d", 100))


def test_overcrowded_generation_reports_exhaustion():
    with pytest.raises(GenerationError):
        generate_scenario(0, "point-mass-2d", 5, epsilon=20.0)


@pytest.mark.parametrize("kwargs", [dict(n_obs=-1), dict(radius_range=(0, 0.2)), dict(model="blimp")])
def test_generation_rejects_bad_arguments(kwargs):
    args = dict(seed=0, model="point-mass-2d", n_obs=1)
    args.update(kwargs)
    with pytest.raises(ValueError):
        generate_scenario(**args)


def test_scenario_round_trip(tmp_path):
    s = generate_scenario(2**64 - 5, "quadrotor-3d", 12, epsilon=0.25)
    path = save_scenario(s, tmp_path / "s.json")
    back = load_scenario(path)
    assert back == s
    assert back.seed == 2**64 - 5 and back.version == 1 and back.epsilon == 0.25
    assert scenario_to_json(back) == path.read_text()


def test_obstacle_on_start_rejected(tmp_path):
    s = generate_scenario(0, "point-mass-2d", 0)
    data = json.loads(scenario_to_json(s))
    data["obstacles"] = [{"center": [0.1, 0.1], "radius": 0.2}]
    (tmp_path / "bad.json").write_text(json.dumps(data))
    with pytest.raises(InvariantError, match="x_initial"):
        load_scenario(tmp_path / "bad.json")


def test_unknown_version_rejected(tmp_path):
    data = json.loads(scenario_to_json(generate_scenario(0, "point-mass-2d", 1)))
    data["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(data))
    with pytest.raises(SchemaVersionError):
        load_scenario(tmp_path / "v.json")


@pytest.mark.parametrize("text", ["{", "[1, 2]", '{"version": 1}', ""])
def test_malformed_scenario_files(tmp_path, text):
    (tmp_path / "m.json").write_text(text)
    with pytest.raises(MalformedFileError):
        load_scenario(tmp_path / "m.json")


def test_error_kinds_are_distinct():
    assert len({MalformedFileError, SchemaVersionError, InvariantError}) == 3
    assert not issubclass(MalformedFileError, InvariantError)


def test_trajectory_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = Trajectory(rng.normal(size=(8, 13)), rng.normal(size=(7, 4)), 1.4129387123409871)
    save_trajectory(t, tmp_path / "t.json", "quadrotor")
    back, kind = load_trajectory(tmp_path / "t.json")
    assert kind == "quadrotor-3d"
    assert back.t_f == t.t_f
    assert np.array_equal(back.states, t.states) and np.array_equal(back.inputs, t.inputs)


def test_truncated_trajectory_is_malformed(tmp_path):
    t = Trajectory(np.zeros((3, 4)), np.zeros((2, 2)), 1.0)
    text = (save_trajectory(t, tmp_path / "t.json", "point-mass-2d")).read_text()
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(MalformedFileError):
        load_trajectory(tmp_path / "t.json")


def test_trajectory_length_mismatch(tmp_path):
    data = {"version": 1, "model": "point-mass-2d", "n": 3, "t_f": 1.0,
            "states": [[0, 0, 0, 0]] * 4, "inputs": [[0, 0]] * 2}
    (tmp_path / "t.json").write_text(json.dumps(data))
    with pytest.raises(InvariantError):
        load_trajectory(tmp_path / "t.json")


def test_validate_rejects_out_of_bounds_obstacle():
    s = generate_scenario(0, "point-mass-2d", 0)
    bad = Scenario(s.model, s.bounds_min, s.bounds_max, [Obstacle((11.0, 5.0), 0.1)], s.x_initial, s.x_final)
    with pytest.raises(InvariantError):
        bad.validate()

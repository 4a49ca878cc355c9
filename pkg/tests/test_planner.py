import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activeplan.dynamics import PointMass2D
from activeplan.planner import (
    ActiveSet,
    SolveCache,
    feasibility_check,
    plan,
    plan_baseline,
    validate_solution,
)
from activeplan.scenario import InvariantError, generate_scenario
from activeplan.solver import SolverOptions
from activeplan.transcription import Margins, Obstacle, Trajectory, build_nlp


def brute_force_check(X, inactive, epsilon):
    """Direct double loop over nodes and obstacles."""
    found = []
    for x in X:
        for j, o in inactive:
            if j in found:
                continue
            if math.hypot(x[0] - o.center[0], x[1] - o.center[1]) <= o.radius + epsilon:
                found.append(j)
    return not found, tuple(found)


def diagonal_scenario(*centres, radius=0.2):
    s = generate_scenario(0, "point-mass-2d", 0)
    s.obstacles.extend(Obstacle(c, radius) for c in centres)
    s.validate()
    return s


# -- active sets ----------------------------------------------------------


def test_active_set_partition():
    a = ActiveSet.all_inactive(4)
    assert a.size == 0 and a.covers(4)
    b = a.promote((2, 0))
    assert b.active == (2, 0) and b.inactive == (1, 3)
    assert b.covers(4)
    assert ActiveSet.all_active(3).active == (0, 1, 2)


def test_active_set_rejects_overlap_and_repeats():
    with pytest.raises(ValueError):
        ActiveSet((1,), (1, 2))
    with pytest.raises(ValueError):
        ActiveSet((1, 1), ())


def test_promote_requires_inactive_members():
    with pytest.raises(ValueError):
        ActiveSet((0,), (1,)).promote((0,))


# -- feasibility check ----------------------------------------------------


def test_straight_line_hits_centre_obstacle():
    X = np.linspace([0, 0], [10, 10], 101)
    ok, new = feasibility_check(X, [(0, Obstacle((5, 5), 0.2))], 0.2)
    assert not ok and new == (0,)


def test_boundary_distance_counts_as_violation():
    X = np.array([[0.4, 0.0]])
    ok, new = feasibility_check(X, [(3, Obstacle((0, 0), 0.2))], 0.2)
    assert (ok, new) == (False, (3,))
    ok, _ = feasibility_check(np.array([[np.nextafter(0.4, 1), 0.0]]), [(3, Obstacle((0, 0), 0.2))], 0.2)
    assert ok


def test_empty_inactive_set_is_feasible():
    X = np.random.default_rng(0).normal(size=(20, 4))
    assert feasibility_check(X, [], 0.2) == (True, ())
    assert feasibility_check(X, {}, 0.2) == (True, ())


def test_first_encounter_order_and_dedup():
    X = np.array([[0, 0], [5, 0], [0, 0], [9, 0]], dtype=float)
    inactive = {7: Obstacle((9, 0), 0.1), 2: Obstacle((5, 0), 0.1), 4: Obstacle((0, 0), 0.1)}
    assert feasibility_check(X, inactive, 0.0) == (False, (4, 2, 7))


def test_only_xy_components_matter():
    X = np.array([[5.0, 5.0, 100.0, -3.0]])
    assert not feasibility_check(X, [Obstacle((5, 5), 0.1)], 0.0)[0]


@settings(max_examples=200, deadline=None)
@given(
    nodes=st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=15),
    obs=st.lists(
        st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0.05, 2.0)), min_size=0, max_size=8
    ),
    eps=st.floats(0, 0.5),
)
def test_feasibility_matches_brute_force(nodes, obs, eps):
    X = np.array(nodes)
    inactive = [(10 + k, Obstacle((cx, cy), r)) for k, (cx, cy, r) in enumerate(obs)]
    assert feasibility_check(X, inactive, eps) == brute_force_check(X, inactive, eps)


# -- validation -----------------------------------------------------------


@pytest.fixture(scope="module")
def solved_two_obstacles():
    s = diagonal_scenario((5, 5), (2.5, 2.6))
    return s, plan(s)


def test_solved_plan_validates(solved_two_obstacles):
    s, rep = solved_two_obstacles
    assert rep.solved
    v = validate_solution(rep.trajectory, s)
    assert v.passed and v.failures() == []


def test_displaced_node_fails_clearance(solved_two_obstacles):
    s, rep = solved_two_obstacles
    X = rep.trajectory.states.copy()
    X[40, :2] = s.obstacles[1].center
    v = validate_solution(Trajectory(X, rep.trajectory.inputs, rep.trajectory.t_f), s)
    assert not v.passed
    assert not v.clearance.passed
    assert "node 40" in v.clearance.detail and "obstacle 1" in v.clearance.detail


def test_dense_check_catches_chord_crossing():
    s = generate_scenario(0, "point-mass-2d", 0)
    s.obstacles.append(Obstacle((5.5, 5.0), 0.15))
    # nodes every 1 m along y = 5; the obstacle sits on a segment midpoint
    xs = np.linspace(0, 10, 11)
    X = np.column_stack([xs, np.full(11, 5.0), np.zeros(11), np.zeros(11)])
    t = Trajectory(X, np.zeros((10, 2)), 0.5)
    v = validate_solution(t, s, dense=True)
    assert v.clearance.passed
    assert not v.dense_clearance.passed
    assert "segment 5" in v.dense_clearance.detail
    assert v.categories()["dense_clearance"] is v.dense_clearance


def test_validation_flags_each_category():
    s = generate_scenario(0, "point-mass-2d", 0)
    X = np.linspace([0, 0, 0, 0], [10, 10, 0, 0], 11)
    U = np.full((10, 2), 20.0)
    v = validate_solution(Trajectory(X, U, 10.0), s, dt_max=0.05)
    assert set(v.failures()) == {"defects", "bounds", "dt"}
    X[-1, 0] = 9.0
    assert not validate_solution(Trajectory(X, U, 10.0), s).boundary.passed


# -- plan / baseline ------------------------------------------------------


def test_zero_obstacles_single_iteration():
    s = generate_scenario(4, "point-mass-2d", 0)
    rep = plan(s)
    assert rep.solved
    assert len(rep.iterations) == 1
    assert rep.final_active_count == 0
    assert rep.t_f == pytest.approx(2.0, abs=0.02)
    base = plan_baseline(s)
    assert len(base.iterations) == 1
    assert np.array_equal(base.trajectory.states, rep.trajectory.states)


def test_plan_promotes_and_grows(solved_two_obstacles):
    s, rep = solved_two_obstacles
    sizes = [len(it.active) for it in rep.iterations]
    assert sizes == sorted(set(sizes))
    assert len(rep.iterations) <= s.n_obs + 1
    assert rep.iterations[0].promoted
    promoted = [set(it.promoted) for it in rep.iterations]
    assert all(not (a & b) for i, a in enumerate(promoted) for b in promoted[i + 1:])
    assert rep.active_set.covers(s.n_obs)


def test_far_obstacles_stay_inactive():
    s = diagonal_scenario((9.0, 1.0), (1.0, 9.0))
    rep = plan(s)
    assert rep.solved and len(rep.iterations) == 1 and rep.final_active_count == 0


def test_baseline_activates_everything(solved_two_obstacles):
    s, rep = solved_two_obstacles
    base = plan_baseline(s)
    assert base.solved
    assert base.active_set.active == (0, 1)
    assert len(base.iterations) == 1
    assert rep.t_f <= base.t_f + 0.05


def test_promote_one_at_a_time():
    s = diagonal_scenario((5, 5), (2.5, 2.5), (7.5, 7.5))
    rep = plan(s, promote="one")
    assert rep.solved
    assert all(len(it.promoted) <= 1 for it in rep.iterations)


def test_cold_start_option_solves_too(solved_two_obstacles):
    s, warm = solved_two_obstacles
    cold = plan(s, warm_start=False)
    assert cold.solved
    assert cold.t_f == pytest.approx(warm.t_f, abs=0.02)


def test_solver_failure_aborts():
    s = diagonal_scenario((5, 5))
    rep = plan(s, solver_opts=SolverOptions(max_outer_iterations=1, max_inner_iterations=3))
    assert rep.status == "solver_failure"
    assert not rep.solved and rep.trajectory is None
    assert len(rep.iterations) == 1
    assert rep.iterations[0].solve["status"] != "converged"


def test_invalid_scenario_rejected():
    s = generate_scenario(0, "point-mass-2d", 0)
    s.obstacles.append(Obstacle((0.1, 0.1), 0.2))
    with pytest.raises(InvariantError):
        plan(s)


def test_model_mismatch_rejected():
    s = generate_scenario(0, "quadrotor-3d", 0)
    with pytest.raises(InvariantError):
        plan(s, PointMass2D())


def test_baseline_feasible_set_is_nested():
    # a point feasible for the all-obstacle NLP is feasible for every subset NLP
    s = generate_scenario(17, "point-mass-2d", 6)
    rep = plan_baseline(s)
    assert rep.solved
    full = build_nlp(PointMass2D(), s, range(6), N=100)
    z = full.encode(rep.trajectory)
    assert full.constraint_violation(z)[1] <= 1e-6
    for subset in ([], [0], [5, 2], [1, 3, 4]):
        assert build_nlp(PointMass2D(), s, subset, N=100).constraint_violation(z)[1] <= 1e-6


def test_solve_cache_hit_is_identical():
    s = generate_scenario(1, "point-mass-2d", 3)
    cache = SolveCache()
    a = plan(s, cache=cache)
    b = plan(s, cache=cache)
    assert cache.hits >= 1
    assert np.array_equal(a.trajectory.states, b.trajectory.states)
    assert all(it.cached for it in b.iterations)
    assert b.effective_wall_time >= b.cached_time > 0


def test_cache_key_depends_on_active_geometry():
    s = diagonal_scenario((5, 5), (2.5, 2.6))
    m = PointMass2D()
    z0 = np.zeros(build_nlp(m, s, [0], N=10).n_vars)
    k0 = SolveCache.key(build_nlp(m, s, [0], N=10), z0, SolverOptions())
    k1 = SolveCache.key(build_nlp(m, s, [1], N=10), z0, SolverOptions())
    k2 = SolveCache.key(build_nlp(m, s, [0], N=10, margins=Margins(epsilon=0.3)), z0, SolverOptions())
    assert len({k0, k1, k2}) == 3

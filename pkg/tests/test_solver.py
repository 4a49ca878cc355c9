import time

import numpy as np
import pytest

from activeplan.dynamics import PointMass2D, Quadrotor
from activeplan.scenario import generate_scenario
from activeplan.solver import FunctionProblem, SolverOptions, kkt_report, solve
from activeplan.transcription import Obstacle, build_nlp, eval_constraint_violation, initial_guess


def quadratic(c, lower=None, upper=None):
    c = np.asarray(c, dtype=float)
    n = c.size
    return FunctionProblem(
        n,
        f=lambda z: float(np.sum((z - c) ** 2)),
        grad=lambda z: 2 * (z - c),
        hess=lambda z: 2 * np.eye(n),
        lower=lower,
        upper=upper,
    )


def test_unconstrained_quadratic():
    c = np.array([1.0, -2.0, 3.0, 0.5])
    res = solve(quadratic(c, lower=np.full(4, -10.0), upper=np.full(4, 10.0)), np.zeros(4))
    assert res.converged
    assert res.inner_iterations <= 50
    assert res.stationarity_residual <= 1e-8
    np.testing.assert_allclose(res.z_final, c, atol=1e-8)


def test_active_box_bound_projects():
    res = solve(quadratic([5.0, -5.0], lower=[-1, -1], upper=[1, 1]), np.zeros(2))
    assert res.converged
    np.testing.assert_allclose(res.z_final, [1, -1])


def test_equality_constrained_quadratic():
    # min |z|^2 s.t. z0 + z1 = 2  ->  z = (1, 1), multiplier -2
    p = FunctionProblem(
        2,
        f=lambda z: float(z @ z),
        grad=lambda z: 2 * z,
        hess=lambda z: 2 * np.eye(2),
        eq=lambda z: np.array([z[0] + z[1] - 2]),
        eq_jac=lambda z: np.array([[1.0, 1.0]]),
    )
    res = solve(p, np.array([5.0, -3.0]))
    assert res.converged
    np.testing.assert_allclose(res.z_final, [1, 1], atol=1e-6)
    assert res.lam_eq[0] == pytest.approx(-2, abs=1e-4)


def test_inequality_constrained_nonconvex():
    # min z0 s.t. z0^2 + z1^2 >= 1 written as g <= 0, with z in [0, 2]^2 -> z0 = 0, z1 = 1 on the circle
    p = FunctionProblem(
        2,
        f=lambda z: float(z[0]),
        grad=lambda z: np.array([1.0, 0.0]),
        hess=lambda z: np.zeros((2, 2)),
        lower=[0, 0],
        upper=[2, 1],
        ineq=lambda z: np.array([1 - z @ z]),
        ineq_jac=lambda z: -2 * z[None, :],
        ineq_hess=lambda z, lam: -2 * lam[0] * np.eye(2),
    )
    res = solve(p, np.array([1.5, 0.5]))
    assert res.converged
    np.testing.assert_allclose(res.z_final, [0, 1], atol=1e-5)


def test_point_mass_obstacle_free_bang_bang():
    s = generate_scenario(0, "point-mass-2d", 0)
    p = build_nlp(PointMass2D(), s, (), N=100)
    res = solve(p, initial_guess(PointMass2D(), s, 100))
    assert res.converged
    assert res.objective == pytest.approx(2.0, abs=0.02)
    # never beats the analytic lower bound by more than tolerance-induced slack
    assert res.objective >= 2.0 - 1e-3
    assert res.max_eq_residual <= 1e-6 and res.max_ineq_violation <= 1e-6
    assert res.stationarity_residual <= 1e-4


@pytest.fixture(scope="module")
def centred_obstacle_run():
    s = generate_scenario(0, "point-mass-2d", 0)
    s.obstacles.append(Obstacle((5.0, 5.0), 0.199))  # r + eps + delta = 0.4
    p = build_nlp(PointMass2D(), s, [0], N=100)
    return p, solve(p, initial_guess(PointMass2D(), s, 100))


def test_obstacle_lengthens_final_time(centred_obstacle_run):
    p, res = centred_obstacle_run
    assert res.converged
    assert res.objective > 2.0 + 1e-3


def test_kkt_report_at_converged_obstacle_run(centred_obstacle_run):
    p, res = centred_obstacle_run
    rep = kkt_report(p, res.z_final, (res.lam_eq, res.lam_ineq))
    assert rep.complementarity <= 1e-4
    assert rep.max_eq_residual == res.max_eq_residual
    assert rep.max_ineq_violation == res.max_ineq_violation
    assert rep.stationarity <= 1e-4


def test_kkt_report_interior_stationary_point():
    p = quadratic([0.3, -0.7])
    rep = kkt_report(p, np.array([0.3, -0.7]), (np.zeros(0), np.zeros(0)))
    assert rep.stationarity <= 1e-8
    assert rep.max_eq_residual == rep.max_ineq_violation == rep.complementarity == 0


def test_kkt_primal_matches_violation_oracle():
    s = generate_scenario(5, "point-mass-2d", 3)
    p = build_nlp(PointMass2D(), s, [0, 1, 2], N=10)
    z = np.random.default_rng(0).normal(size=p.n_vars)
    rep = kkt_report(p, z, (np.zeros(p.n_eq), np.zeros(p.n_ineq)))
    assert (rep.max_eq_residual, rep.max_ineq_violation) == eval_constraint_violation(p, z)
    with pytest.raises(ValueError):
        kkt_report(p, z, (np.zeros(1), np.zeros(p.n_ineq)))


def test_solve_is_deterministic():
    s = generate_scenario(21, "point-mass-2d", 4)
    p = build_nlp(PointMass2D(), s, [0, 1, 2, 3], N=40)
    z0 = initial_guess(PointMass2D(), s, 40)
    a, b = solve(p, z0), solve(p, z0)
    assert a.status == b.status
    assert np.array_equal(a.z_final, b.z_final)


def test_penalty_is_non_decreasing(centred_obstacle_run):
    _, res = centred_obstacle_run
    assert len(res.penalties) >= 1
    assert all(b >= a for a, b in zip(res.penalties, res.penalties[1:]))


def test_converged_status_implies_tolerances(centred_obstacle_run):
    _, res = centred_obstacle_run
    opts = SolverOptions()
    assert res.max_eq_residual <= opts.constraint_tol
    assert res.max_ineq_violation <= opts.constraint_tol
    assert res.stationarity_residual <= opts.stationarity_tol


def test_iteration_limit_is_reported_not_raised():
    s = generate_scenario(0, "point-mass-2d", 0)
    p = build_nlp(PointMass2D(), s, (), N=100)
    res = solve(p, initial_guess(PointMass2D(), s, 100), SolverOptions(max_outer_iterations=1, max_inner_iterations=2))
    assert not res.converged
    assert res.status in ("iteration_limit", "infeasible_stall")
    assert res.summary()["status"] == res.status


def test_wall_clock_limit_honoured():
    s = generate_scenario(3, "quadrotor-3d", 0)
    p = build_nlp(Quadrotor(), s, (), N=100)
    t0 = time.perf_counter()
    res = solve(p, initial_guess(Quadrotor(), s, 100), SolverOptions(wall_clock_limit=0.5))
    elapsed = time.perf_counter() - t0
    assert res.status == "time_limit"
    assert elapsed < 3.0


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        solve(quadratic([1.0, 2.0]), np.zeros(3))


@pytest.mark.parametrize(
    "kwargs",
    [dict(constraint_tol=0), dict(max_inner_iterations=0), dict(wall_clock_limit=-1), dict(penalty_growth=1.0)],
)
def test_options_validation(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)

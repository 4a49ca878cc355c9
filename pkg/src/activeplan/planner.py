"""Iterative active/inactive obstacle planning.

The planner starts with every obstacle inactive, solves the minimum-time
problem, checks the solution node by node against the obstacles that were
left out, moves the ones it hits into the active set and solves again. The
loop ends as soon as a solution clears every inactive obstacle; because each
unsuccessful pass promotes at least one obstacle it runs at most
``n_obs + 1`` times.

``plan_baseline`` is the comparison method: one solve with all obstacles
active. ``validate_solution`` audits a finished trajectory from scratch,
using only the dynamics step function and the scenario.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .dynamics import make_model, rk4_step
from .scenario import InvariantError, Scenario
from .solver import SolverOptions, solve
from .transcription import Margins, NlpProblem, Trajectory, build_nlp, initial_guess

SOLVED = "solved"
SOLVER_FAILURE = "solver_failure"
INVALID_SOLUTION = "invalid_solution"


# --------------------------------------------------------------------------
# active set bookkeeping


@dataclass(frozen=True)
class ActiveSet:
    """Partition of obstacle indices into active and inactive.

    Both parts are tuples; ``active`` keeps promotion order and ``inactive``
    keeps scenario order.
    """

    active: tuple = ()
    inactive: tuple = ()

    def __post_init__(self):
        a, b = set(self.active), set(self.inactive)
        if len(a) != len(self.active) or len(b) != len(self.inactive):
            raise ValueError("active and inactive index lists must not repeat entries")
        if a & b:
            raise ValueError(f"indices {sorted(a & b)} are both active and inactive")

    @classmethod
    def all_inactive(cls, n_obs: int) -> "ActiveSet":
        return cls((), tuple(range(n_obs)))

    @classmethod
    def all_active(cls, n_obs: int) -> "ActiveSet":
        return cls(tuple(range(n_obs)), ())

    @property
    def size(self) -> int:
        return len(self.active)

    def covers(self, n_obs: int) -> bool:
        """True when the two parts together are exactly ``0..n_obs-1``."""
        return sorted(self.active + self.inactive) == list(range(n_obs))

    def promote(self, indices) -> "ActiveSet":
        indices = tuple(int(i) for i in indices)
        missing = [i for i in indices if i not in self.inactive]
        if missing:
            raise ValueError(f"cannot promote indices {missing}: not inactive")
        moved = set(indices)
        return ActiveSet(
            self.active + indices, tuple(i for i in self.inactive if i not in moved)
        )


# --------------------------------------------------------------------------
# feasibility check


def _xy(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 2:
        raise ValueError("states must carry at least x and y")
    return X[:, :2]


def _inactive_items(inactive):
    if hasattr(inactive, "items"):
        return list(inactive.items())
    items = list(inactive)
    if items and not isinstance(items[0], tuple):
        return list(enumerate(items))
    return items


def feasibility_check(X, inactive, epsilon: float):
    """Node-wise collision check against obstacles left out of the NLP.

    Parameters
    ----------
    X : array_like, shape (n_nodes, nx)
        State sequence. Only the first two components (x, y) are used.
    inactive : mapping or sequence
        Either ``{index: Obstacle}``, a sequence of ``(index, Obstacle)``
        pairs, or a bare sequence of obstacles (indexed by position).
    epsilon : float
        Clearance pad added to each radius.

    Returns
    -------
    is_feasible : bool
    new : tuple of int
        Violated obstacle indices in first-encounter order: nodes are scanned
        in order and, within a node, obstacles in the order given. A node at
        distance exactly ``r + epsilon`` counts as a violation.
    """
    items = _inactive_items(inactive)
    if not items:
        return True, ()
    P = _xy(X)
    idx = np.array([int(k) for k, _ in items])
    C = np.array([o.center for _, o in items], dtype=float)
    R = np.array([o.radius for _, o in items], dtype=float) + float(epsilon)
    dist = np.hypot(P[:, None, 0] - C[None, :, 0], P[:, None, 1] - C[None, :, 1])
    hit = dist <= R[None, :]
    cols = np.flatnonzero(hit.any(axis=0))
    if cols.size == 0:
        return True, ()
    first_node = hit[:, cols].argmax(axis=0)
    order = np.lexsort((cols, first_node))
    return False, tuple(int(v) for v in idx[cols[order]])


# --------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class ValidationReport:
    """Per-category audit of a trajectory. ``dense_clearance`` is ``None``
    unless the dense check was requested."""

    defects: CheckResult
    boundary: CheckResult
    bounds: CheckResult
    clearance: CheckResult
    dt: CheckResult
    dense_clearance: CheckResult | None = None

    NODE_WISE = ("defects", "boundary", "bounds", "clearance", "dt")

    @property
    def passed(self) -> bool:
        """All node-wise categories pass (the dense check is advisory)."""
        return all(getattr(self, name).passed for name in self.NODE_WISE)

    def categories(self) -> dict:
        out = {name: getattr(self, name) for name in self.NODE_WISE}
        if self.dense_clearance is not None:
            out["dense_clearance"] = self.dense_clearance
        return out

    def failures(self) -> list:
        return [name for name, res in self.categories().items() if not res.passed]


def _clearance(P, obstacles, epsilon):
    """Worst (distance - (r + epsilon)) and where it happens."""
    if not obstacles:
        return np.inf, -1, -1
    C = np.array([o.center for o in obstacles], dtype=float)
    R = np.array([o.radius for o in obstacles], dtype=float) + epsilon
    gap = np.hypot(P[:, None, 0] - C[None, :, 0], P[:, None, 1] - C[None, :, 1]) - R[None, :]
    i, j = np.unravel_index(np.argmin(gap), gap.shape)
    return float(gap[i, j]), int(i), int(j)


def validate_solution(
    trajectory: Trajectory,
    scenario: Scenario,
    model=None,
    margins: Margins | None = None,
    dt_max: float = 0.05,
    dense: bool = False,
    samples_per_segment: int = 10,
) -> ValidationReport:
    """Audit ``trajectory`` against the scenario without using solver state.

    Defects are recomputed with :func:`rk4_step`; clearance is checked at
    every node against *all* obstacles and must be strictly greater than
    ``r + epsilon``. With ``dense=True`` the straight chord between
    consecutive nodes is also sampled at ``samples_per_segment`` interior
    points.
    """
    if model is None:
        model = make_model(scenario.model)
    if margins is None:
        margins = Margins(epsilon=scenario.epsilon)
    X, U = trajectory.states, trajectory.inputs
    n = trajectory.n
    dt = trajectory.dt

    defects = np.array([np.max(np.abs(X[i + 1] - rk4_step(model, X[i], U[i], dt))) for i in range(n)])
    k = int(np.argmax(defects))
    worst = float(defects[k])
    defect_res = CheckResult(
        worst <= margins.defect_tol, worst, f"worst defect {worst:.3e} on segment {k}"
    )

    e0 = float(np.max(np.abs(X[0] - scenario.x_initial)))
    e1 = float(np.max(np.abs(X[-1] - scenario.x_final)))
    worst = max(e0, e1)
    boundary_res = CheckResult(
        worst <= margins.boundary_tol, worst, f"initial error {e0:.3e}, final error {e1:.3e}"
    )

    ulo, uhi = (np.asarray(b, dtype=float) for b in model.input_bounds())
    slo, shi = (np.asarray(b, dtype=float) for b in model.state_bounds())
    u_excess = float(np.max(np.maximum(U - uhi, ulo - U), initial=0.0))
    x_excess = float(np.max(np.maximum(X - shi, slo - X), initial=0.0))
    worst = max(u_excess, x_excess, 0.0)
    bounds_res = CheckResult(
        worst <= margins.bound_tol, worst,
        f"input excess {max(u_excess, 0.0):.3e}, state excess {max(x_excess, 0.0):.3e}",
    )

    P = X[:, :2]
    gap, i, j = _clearance(P, scenario.obstacles, margins.epsilon)
    if np.isfinite(gap):
        detail = f"closest approach: node {i} to obstacle {j}, margin {gap:.4e} m"
    else:
        detail = "no obstacles"
    clearance_res = CheckResult(bool(gap > 0), gap, detail)

    excess = dt - dt_max
    dt_res = CheckResult(excess <= margins.bound_tol, excess, f"dt {dt:.6f} s vs cap {dt_max:.6f} s")

    dense_res = None
    if dense:
        s = np.linspace(0.0, 1.0, samples_per_segment + 2)[1:-1]
        pts = (P[:-1, None, :] * (1.0 - s)[None, :, None] + P[1:, None, :] * s[None, :, None])
        gap_d, i_d, j_d = _clearance(pts.reshape(-1, 2), scenario.obstacles, margins.epsilon)
        seg = i_d // samples_per_segment if i_d >= 0 else -1
        dense_res = CheckResult(
            bool(gap_d > 0), gap_d,
            f"closest sampled point: segment {seg} to obstacle {j_d}, margin {gap_d:.4e} m"
            if np.isfinite(gap_d) else "no obstacles",
        )
    return ValidationReport(defect_res, boundary_res, bounds_res, clearance_res, dt_res, dense_res)


# --------------------------------------------------------------------------
# planning loop


@dataclass
class IterationRecord:
    active_before: int
    active: tuple
    solve: dict
    promoted: tuple
    wall_time: float
    cached: bool = False


@dataclass
class PlanReport:
    method: str
    status: str
    trajectory: Trajectory | None
    iterations: list
    wall_time: float
    active_set: ActiveSet
    n_obs: int
    validation: ValidationReport | None = None
    message: str = ""
    cached_time: float = 0.0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED

    @property
    def t_f(self) -> float | None:
        return None if self.trajectory is None else self.trajectory.t_f

    @property
    def final_active_count(self) -> int:
        return self.active_set.size

    @property
    def effective_wall_time(self) -> float:
        """Wall time with cached solves counted at their original cost."""
        return self.wall_time + self.cached_time


class SolveCache:
    """Memo of solver results keyed by a fingerprint of the full solve input.

    Every plan begins with the same obstacle-free NLP for a given model,
    boundary pair and discretization, so a batch can share that first solve.
    The solver is deterministic, which makes a hit indistinguishable from a
    fresh solve apart from wall time; hits are flagged in the iteration
    records and their original time is kept.
    """

    def __init__(self):
        self._store = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(problem: NlpProblem, z0, opts: SolverOptions) -> str:
        h = hashlib.sha256()
        model = problem.model
        h.update(repr((model.kind, getattr(model, "params", None), getattr(model, "a_max", None))).encode())
        h.update(repr((problem.N, problem.dt_max, problem.margins, opts)).encode())
        h.update(np.asarray(problem.x_initial, dtype=float).tobytes())
        h.update(np.asarray(problem.x_final, dtype=float).tobytes())
        for o in problem.obstacles:
            h.update(np.array([*o.center, o.radius]).tobytes())
        h.update(np.asarray(z0, dtype=float).tobytes())
        return h.hexdigest()

    def solve(self, problem, z0, opts):
        k = self.key(problem, z0, opts)
        if k in self._store:
            self.hits += 1
            return self._store[k], True
        self.misses += 1
        result = solve(problem, z0, opts)
        self._store[k] = result
        return result, False

    def __len__(self):
        return len(self._store)


def _prepare(scenario, model, margins):
    scenario.validate()
    if model is None:
        model = make_model(scenario.model)
    if model.kind != scenario.model:
        raise InvariantError(f"model {model.kind} does not match scenario model {scenario.model}")
    if margins is None:
        margins = Margins(epsilon=scenario.epsilon)
    return model, margins


def _run_solve(problem, z0, opts, cache):
    if cache is None:
        return solve(problem, z0, opts), False
    return cache.solve(problem, z0, opts)


def _finish(method, scenario, model, margins, dt_max, traj, records, active, t0, cached_time):
    validation = validate_solution(traj, scenario, model, margins, dt_max)
    status = SOLVED if validation.passed else INVALID_SOLUTION
    msg = "" if validation.passed else "converged but failed validation: " + ", ".join(validation.failures())
    return PlanReport(
        method=method,
        status=status,
        trajectory=traj,
        iterations=records,
        wall_time=time.perf_counter() - t0,
        active_set=active,
        n_obs=scenario.n_obs,
        validation=validation,
        message=msg,
        cached_time=cached_time,
    )


def plan(
    scenario: Scenario,
    model=None,
    N: int = 100,
    dt_max: float = 0.05,
    margins: Margins | None = None,
    solver_opts: SolverOptions | None = None,
    *,
    warm_start: bool = True,
    promote: str = "all",
    cache: SolveCache | None = None,
) -> PlanReport:
    """Iterative active/inactive obstacle planning.

    Parameters
    ----------
    scenario : Scenario
        Validated up front; an invalid scenario raises :class:`InvariantError`.
    model : dynamics model, optional
        Defaults to the model named by the scenario.
    N, dt_max : int, float
        Number of intervals and cap on ``T_f / N``.
    margins : Margins, optional
        Defaults to ``Margins(epsilon=scenario.epsilon)``.
    solver_opts : SolverOptions, optional
    warm_start : bool
        Start each solve from the previous iteration's trajectory.
    promote : {"all", "one"}
        Promote every violated obstacle at once, or only the first found.
    cache : SolveCache, optional
        Share identical solves across plans.

    Returns
    -------
    PlanReport
        ``status`` is ``"solved"``, ``"solver_failure"`` (the loop aborts on
        the first non-converged solve) or ``"invalid_solution"`` (converged
        but the independent audit failed).
    """
    if promote not in ("all", "one"):
        raise ValueError("promote must be 'all' or 'one'")
    t0 = time.perf_counter()
    model, margins = _prepare(scenario, model, margins)
    opts = solver_opts or SolverOptions()
    active = ActiveSet.all_inactive(scenario.n_obs)
    records = []
    cached_time = 0.0
    warm = None
    for _ in range(scenario.n_obs + 1):
        problem = build_nlp(model, scenario, active.active, N, dt_max, margins)
        z0 = initial_guess(model, scenario, N, warm=warm if warm_start else None)
        result, hit = _run_solve(problem, z0, opts, cache)
        if hit:
            cached_time += result.wall_time
        record = IterationRecord(active.size, active.active, result.summary(), (), result.wall_time, hit)
        records.append(record)
        if not result.converged:
            return PlanReport(
                method="iterative",
                status=SOLVER_FAILURE,
                trajectory=None,
                iterations=records,
                wall_time=time.perf_counter() - t0,
                active_set=active,
                n_obs=scenario.n_obs,
                message=f"solve {len(records)} ended with status {result.status}",
                cached_time=cached_time,
            )
        traj = problem.decode(result.z_final)
        inactive = [(j, scenario.obstacles[j]) for j in active.inactive]
        feasible, new = feasibility_check(traj.states, inactive, margins.epsilon)
        if feasible:
            return _finish("iterative", scenario, model, margins, dt_max, traj, records, active, t0,
                           cached_time)
        if promote == "one":
            new = new[:1]
        record.promoted = new
        active = active.promote(new)
        warm = traj
    raise RuntimeError("active set exhausted without a feasible solution")  # unreachable


def plan_baseline(
    scenario: Scenario,
    model=None,
    N: int = 100,
    dt_max: float = 0.05,
    margins: Margins | None = None,
    solver_opts: SolverOptions | None = None,
    *,
    cache: SolveCache | None = None,
) -> PlanReport:
    """Single solve with every obstacle active from the start."""
    t0 = time.perf_counter()
    model, margins = _prepare(scenario, model, margins)
    opts = solver_opts or SolverOptions()
    active = ActiveSet.all_active(scenario.n_obs)
    problem = build_nlp(model, scenario, active.active, N, dt_max, margins)
    z0 = initial_guess(model, scenario, N)
    result, hit = _run_solve(problem, z0, opts, cache)
    cached_time = result.wall_time if hit else 0.0
    records = [IterationRecord(0, active.active, result.summary(), (), result.wall_time, hit)]
    if not result.converged:
        return PlanReport(
            method="baseline",
            status=SOLVER_FAILURE,
            trajectory=None,
            iterations=records,
            wall_time=time.perf_counter() - t0,
            active_set=active,
            n_obs=scenario.n_obs,
            message=f"solve ended with status {result.status}",
            cached_time=cached_time,
        )
    traj = problem.decode(result.z_final)
    return _finish("baseline", scenario, model, margins, dt_max, traj, records, active, t0,
                   cached_time)

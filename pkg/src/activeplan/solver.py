"""Augmented Lagrangian NLP solver for smooth bound-constrained problems.

Solves::

    min f(z)  s.t.  c(z) = 0,  g(z) <= 0,  lower <= z <= upper

The outer loop is a classical PHR augmented Lagrangian (multiplier updates,
penalty growth when the constraint violation stalls). Each subproblem is
minimized over the box by a projected Newton method: binding bounds are
frozen, the free block is solved with a shifted Cholesky factorization, and
an Armijo search runs along the projection arc. When a subproblem is
stationary but the Hessian is indefinite the inner loop steps along the
direction of most negative curvature, which lets symmetric starts (e.g. a
straight line through an obstacle centre) escape the saddle.

Problems expose ``n_vars, n_eq, n_ineq, lower, upper, objective,
objective_grad, constraints, jacobian, lagrangian_hessian`` and
``n_coupled_tail``: the number of trailing variables that couple globally.
The remaining block is assumed banded and factorized with LAPACK's banded
Cholesky; a dense factorization is used when it is not.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

CONVERGED = "converged"
INFEASIBLE_STALL = "infeasible_stall"
ITERATION_LIMIT = "iteration_limit"
TIME_LIMIT = "time_limit"
NUMERICAL_FAILURE = "numerical_failure"

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iterations: int = 10
    max_inner_iterations: int = 500
    constraint_tol: float = 1e-6
    stationarity_tol: float = 1e-4
    wall_clock_limit: float = 300.0
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    violation_shrink: float = 0.25
    max_penalty: float = 1e12
    restarts: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.constraint_tol <= 0 or self.stationarity_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer_iterations <= 0 or self.max_inner_iterations <= 0:
            raise ValueError("iteration limits must be positive")
        if self.wall_clock_limit <= 0:
            raise ValueError("wall_clock_limit must be positive")
        if self.initial_penalty <= 0 or self.penalty_growth <= 1:
            raise ValueError("penalty must start positive and grow by a factor > 1")


@dataclass
class SolveResult:
    status: str
    z_final: np.ndarray
    objective: float
    max_eq_residual: float
    max_ineq_violation: float
    stationarity_residual: float
    complementarity: float
    iterations: int
    inner_iterations: int
    wall_time: float
    lam_eq: np.ndarray = field(repr=False)
    lam_ineq: np.ndarray = field(repr=False)
    penalties: list = field(default_factory=list, repr=False)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "max_eq_residual": self.max_eq_residual,
            "max_ineq_violation": self.max_ineq_violation,
            "stationarity_residual": self.stationarity_residual,
            "complementarity": self.complementarity,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "wall_time": self.wall_time,
            "message": self.message,
        }


@dataclass
class KKTReport:
    stationarity: float
    max_eq_residual: float
    max_ineq_violation: float
    complementarity: float


class _TimeUp(Exception):
    pass


# --------------------------------------------------------------------------
# linear algebra


class _Factorization:
    """Shifted Cholesky of a symmetric matrix with a banded body and a dense tail."""

    def __init__(self, n, n_tail):
        self.n = n
        self.t = n_tail
        self.m = n - n_tail

    def factor(self, H: sp.csr_matrix, free: np.ndarray, tau: float) -> bool:
        n, m, t = self.n, self.m, self.t
        coo = H.tocoo()
        r, c, v = coo.row, coo.col, coo.data
        keep = free[r] & free[c]
        r, c, v = r[keep], c[keep], v[keep]
        diag_add = np.where(free, tau, 1.0)
        body = (r < m) & (c < m)
        bw = int(np.max(np.abs(r[body] - c[body]))) if np.any(body) else 0
        self.bw = bw
        self.banded = m > 0 and bw < max(8, m // 4)
        if not self.banded:
            K = np.zeros((n, n))
            np.add.at(K, (r, c), v)
            K[np.diag_indices(n)] += diag_add
            try:
                self._dense = sla.cho_factor(K, lower=False, check_finite=False)
            except np.linalg.LinAlgError:
                return False
            return bool(np.all(np.isfinite(self._dense[0])))
        ab = np.zeros((bw + 1, m))
        sel = (r <= c) & (c < m)
        np.add.at(ab, (bw + r[sel] - c[sel], c[sel]), v[sel])
        ab[bw] += diag_add[:m]
        try:
            self._cb = sla.cholesky_banded(ab, lower=False, check_finite=False)
        except np.linalg.LinAlgError:
            return False
        if t:
            B = np.zeros((m, t))
            sel = (r < m) & (c >= m)
            np.add.at(B, (r[sel], c[sel] - m), v[sel])
            C = np.zeros((t, t))
            sel = (r >= m) & (c >= m)
            np.add.at(C, (r[sel] - m, c[sel] - m), v[sel])
            C[np.diag_indices(t)] += diag_add[m:]
            AinvB = sla.cho_solve_banded((self._cb, False), B, check_finite=False)
            S = C - B.T @ AinvB
            try:
                self._cs = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return False
            self._B = B
            self._AinvB = AinvB
        return True

    def solve(self, rhs):
        if not self.banded:
            return sla.cho_solve(self._dense, rhs, check_finite=False)
        m, t = self.m, self.t
        r1 = rhs[:m]
        a = sla.cho_solve_banded((self._cb, False), r1, check_finite=False)
        if not t:
            return a
        r2 = rhs[m:] - self._B.T @ a
        y = sla.cho_solve((self._cs, True), r2, check_finite=False)
        x = a - self._AinvB @ y
        return np.concatenate([x, y])


def _smallest_eigpair(H: sp.csr_matrix, free: np.ndarray):
    idx = np.flatnonzero(free)
    Hf = H[idx][:, idx].toarray()
    Hf = 0.5 * (Hf + Hf.T)
    w, V = sla.eigh(Hf, subset_by_index=[0, 0], check_finite=False)
    v = np.zeros(H.shape[0])
    v[idx] = V[:, 0]
    return float(w[0]), v


# --------------------------------------------------------------------------
# solver


class _AugmentedLagrangian:
    TAU_MIN = 1e-8
    TAU_MAX = 1e20
    EPS_BIND = 1e-2
    BIND_FACTOR = 10.0
    ARMIJO = 1e-4

    def __init__(self, problem, opts: SolverOptions, t0: float):
        self.p = problem
        self.opts = opts
        self.t0 = t0
        self.lo = np.asarray(problem.lower, dtype=float)
        self.hi = np.asarray(problem.upper, dtype=float)
        self.lam = np.zeros(problem.n_eq)
        self.mu = np.zeros(problem.n_ineq)
        self.rho = opts.initial_penalty
        self.inner_total = 0
        self.tau = 0.0
        self._fact = None

    def project(self, z):
        return np.minimum(np.maximum(z, self.lo), self.hi)

    def check_time(self):
        if time.perf_counter() - self.t0 > self.opts.wall_clock_limit:
            raise _TimeUp

    def merit(self, z):
        c, g = self.p.constraints(z)
        rho = self.rho
        shifted = np.maximum(0.0, self.mu + rho * g)
        val = (
            self.p.objective(z)
            + self.lam @ c
            + 0.5 * rho * (c @ c)
            + (shifted @ shifted - self.mu @ self.mu) / (2.0 * rho)
        )
        return float(val)

    def first_order(self, z):
        c, g = self.p.constraints(z)
        Je, Ji = self.p.jacobian(z)
        yE = self.lam + self.rho * c
        yI = np.maximum(0.0, self.mu + self.rho * g)
        grad = self.p.objective_grad(z) + Je.T @ yE + Ji.T @ yI
        return c, g, Je, Ji, yE, yI, grad

    def hessian(self, z, Je, Ji, yE, yI):
        H = self.p.lagrangian_hessian(z, yE, yI)
        H = H + self.rho * (Je.T @ Je)
        act = np.flatnonzero(yI > 0)
        if act.size:
            Ja = Ji[act]
            H = H + self.rho * (Ja.T @ Ja)
        return H.tocsr()

    def factorization(self, H):
        if self._fact is None:
            self._fact = _Factorization(self.p.n_vars, getattr(self.p, "n_coupled_tail", 0))
        return self._fact

    def _factor_shifted(self, H, free, tau):
        fact = self.factorization(H)
        return fact if fact.factor(H, free, tau) else None

    def is_indefinite(self, H, free):
        scale = max(1.0, float(np.max(np.abs(H.diagonal()))))
        return self._factor_shifted(H, free, 1e-10 * scale) is None

    def inner(self, z, omega):
        """Minimize the augmented Lagrangian over the box starting from ``z``.

        Projected Newton with an epsilon-binding set: variables near a bound
        whose gradient pushes outward take a scaled gradient step onto the
        bound, the remaining block takes a (shifted) Newton step, and the
        combined direction is searched along the projection arc.
        """
        opts = self.opts
        phi = self.merit(z)
        for _ in range(opts.max_inner_iterations):
            self.check_time()
            c, g, Je, Ji, yE, yI, grad = self.first_order(z)
            pg = self.project(z - grad) - z
            pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
            if not np.isfinite(pg_norm) or not np.isfinite(phi):
                raise FloatingPointError("non-finite augmented Lagrangian")
            H = self.hessian(z, Je, Ji, yE, yI)
            self.inner_total += 1
            if pg_norm <= omega:
                free = ~(((z <= self.lo) & (grad > 0)) | ((z >= self.hi) & (grad < 0)))
                if not self.is_indefinite(H, free):
                    return z, phi, False
                step = self._curvature_step(z, phi, H, grad, free)
                if step is None:
                    return z, phi, False
                z, phi = step
                continue

            eps_b = min(self.EPS_BIND, self.BIND_FACTOR * pg_norm)
            binding = ((z <= self.lo + eps_b) & (grad > 0)) | ((z >= self.hi - eps_b) & (grad < 0))
            free = ~binding
            d = self._newton_step(z, H, grad, binding)
            if d is None:
                step = self._curvature_step(z, phi, H, grad, free)
                if step is None:
                    return z, phi, True
                z, phi = step
                continue
            slope = float(grad @ d)
            alpha = 1.0
            accepted = False
            for _ls in range(50):
                z_new = self.project(z + alpha * d)
                phi_new = self.merit(z_new)
                if np.isfinite(phi_new) and phi - phi_new >= -self.ARMIJO * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                self.tau = max(10.0 * self.tau, self.TAU_MIN)
                step = self._curvature_step(z, phi, H, grad, free)
                if step is None:
                    continue
                z, phi = step
                continue
            if alpha == 1.0:
                self.tau = self.tau / 4.0
            elif alpha < 0.1:
                self.tau = max(10.0 * self.tau, self.TAU_MIN)
            z, phi = z_new, phi_new
        return z, phi, True

    def _newton_step(self, z, H, grad, binding, rounds=6):
        """Shifted Newton step that stays inside the box at unit length.

        Variables in ``binding`` move onto their bound; any other variable the
        step would carry outside the box is fixed at that bound too, and the
        rest is re-solved with the coupling to the fixed moves included.
        """
        lo, hi = self.lo, self.hi
        fixed = binding.copy()
        d = np.zeros_like(z)
        d[fixed] = np.where(grad > 0, lo - z, hi - z)[fixed]
        first = None
        for _ in range(rounds):
            free = ~fixed
            fact = self._shifted_newton(H, free)
            if fact is None:
                return first
            rhs = np.where(free, grad + H @ np.where(fixed, d, 0.0), 0.0)
            d = np.where(free, -fact.solve(rhs), d)
            if first is None:
                first = d.copy()
            trial = z + d
            out = free & ((trial < lo) | (trial > hi))
            if not out.any():
                break
            fixed |= out
            d[out] = np.clip(trial[out], lo[out], hi[out]) - z[out]
        if grad @ d >= 0:
            return first if grad @ first < 0 else None
        return d

    def _shifted_newton(self, H, free):
        """Factor the free block with the smallest workable diagonal shift."""
        scale = max(1.0, float(np.max(np.abs(H.diagonal()))))
        tau = 0.0 if self.tau < self.TAU_MIN * scale else self.tau
        while tau <= self.TAU_MAX:
            fact = self._factor_shifted(H, free, tau)
            if fact is not None:
                self.tau = tau
                return fact
            tau = max(4.0 * tau, self.TAU_MIN * scale)
        return None

    def _curvature_step(self, z, phi, H, grad, free):
        lam_min, v = _smallest_eigpair(H, free)
        scale = max(1.0, float(np.max(np.abs(H.diagonal()))))
        if lam_min >= -1e-8 * scale:
            return None
        s = grad @ v
        if s > 0 or (s == 0 and v[np.argmax(np.abs(v))] < 0):
            v = -v
        alpha = 1.0
        for _ in range(40):
            z_new = self.project(z + alpha * v)
            phi_new = self.merit(z_new)
            if np.isfinite(phi_new) and phi_new < phi + 0.25 * alpha * alpha * lam_min:
                return z_new, phi_new
            alpha *= 0.5
        return None


def _projected_stationarity(problem, z, lam_eq, lam_ineq):
    Je, Ji = problem.jacobian(z)
    grad = problem.objective_grad(z) + Je.T @ lam_eq + Ji.T @ lam_ineq
    lo = np.asarray(problem.lower)
    hi = np.asarray(problem.upper)
    pg = np.minimum(np.maximum(z - grad, lo), hi) - z
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def kkt_report(problem, z, multipliers) -> KKTReport:
    """Stationarity, primal feasibility and complementarity at ``z``.

    ``multipliers`` is the pair ``(lam_eq, lam_ineq)``; the inequality
    multipliers are expected to be non-negative.
    """
    z = np.asarray(z, dtype=float)
    lam_eq, lam_ineq = (np.asarray(m, dtype=float) for m in multipliers)
    if z.shape != (problem.n_vars,) or lam_eq.shape != (problem.n_eq,) or lam_ineq.shape != (
        problem.n_ineq,
    ):
        raise ValueError("dimension mismatch between problem, point and multipliers")
    eq, ineq = problem.constraint_violation(z)
    _, g = problem.constraints(z)
    compl = float(np.max(np.abs(lam_ineq * g))) if g.size else 0.0
    return KKTReport(
        stationarity=_projected_stationarity(problem, z, lam_eq, lam_ineq),
        max_eq_residual=eq,
        max_ineq_violation=ineq,
        complementarity=compl,
    )


def _solve_once(problem, z0, opts: SolverOptions, t0: float) -> SolveResult:
    al = _AugmentedLagrangian(problem, opts, t0)
    z = al.project(np.asarray(z0, dtype=float).copy())
    status = ITERATION_LIMIT
    message = ""
    prev_viol = np.inf
    penalties = []
    outer = 0
    stat = np.inf
    try:
        for outer in range(1, opts.max_outer_iterations + 1):
            penalties.append(al.rho)
            omega = max(0.1 * opts.stationarity_tol, min(1e-2, 1.0 / al.rho))
            z, _, stalled = al.inner(z, omega)
            c, g = problem.constraints(z)
            viol = max(
                float(np.max(np.abs(c))) if c.size else 0.0,
                float(np.max(np.abs(np.maximum(g, -al.mu / al.rho)))) if g.size else 0.0,
            )
            al.lam = al.lam + al.rho * c
            al.mu = np.maximum(0.0, al.mu + al.rho * g)
            kkt = kkt_report(problem, z, (al.lam, al.mu))
            stat = kkt.stationarity
            log.debug(
                "outer %d rho=%.1e f=%.6f eq=%.2e ineq=%.2e stat=%.2e compl=%.2e inner=%d%s",
                outer, al.rho, problem.objective(z), kkt.max_eq_residual, kkt.max_ineq_violation,
                kkt.stationarity, kkt.complementarity, al.inner_total, " (stalled)" if stalled else "",
            )
            if (
                kkt.max_eq_residual <= opts.constraint_tol
                and kkt.max_ineq_violation <= opts.constraint_tol
                and kkt.stationarity <= opts.stationarity_tol
                and kkt.complementarity <= opts.stationarity_tol
            ):
                status = CONVERGED
                break
            if viol > opts.violation_shrink * prev_viol:
                if al.rho * opts.penalty_growth > opts.max_penalty:
                    status = INFEASIBLE_STALL
                    message = "penalty limit reached"
                    break
                al.rho *= opts.penalty_growth
            prev_viol = viol
        else:
            message = "outer iteration limit"
    except _TimeUp:
        status = TIME_LIMIT
        message = "wall-clock limit"
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        status = NUMERICAL_FAILURE
        message = str(exc)

    eq, ineq = problem.constraint_violation(z)
    if not (np.isfinite(eq) and np.isfinite(ineq)):
        status = NUMERICAL_FAILURE
    _, g = problem.constraints(z)
    compl = float(np.max(np.abs(al.mu * g))) if g.size else 0.0
    if status != CONVERGED and np.isfinite(eq):
        try:
            stat = _projected_stationarity(problem, z, al.lam, al.mu)
        except (ValueError, FloatingPointError):
            pass
    if status == ITERATION_LIMIT and eq > opts.constraint_tol and ineq > opts.constraint_tol:
        status = INFEASIBLE_STALL
    return SolveResult(
        status=status,
        z_final=z,
        objective=float(problem.objective(z)),
        max_eq_residual=eq,
        max_ineq_violation=ineq,
        stationarity_residual=float(stat),
        complementarity=compl,
        iterations=outer,
        inner_iterations=al.inner_total,
        wall_time=time.perf_counter() - t0,
        lam_eq=al.lam,
        lam_ineq=al.mu,
        penalties=penalties,
        message=message,
    )


def solve(problem, z0, opts: SolverOptions | None = None) -> SolveResult:
    """Locally solve ``problem`` from ``z0``. Never raises on non-convergence."""
    if opts is None:
        opts = SolverOptions()
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (problem.n_vars,):
        raise ValueError(f"z0 must have length {problem.n_vars}")
    t0 = time.perf_counter()
    result = _solve_once(problem, z0, opts, t0)
    if opts.restarts and not result.converged:
        # deterministic perturbations keyed by the attempt number
        for attempt in range(1, opts.restarts + 1):
            if result.status == TIME_LIMIT:
                break
            rng = np.random.Generator(np.random.Philox(attempt))
            width = np.where(np.isfinite(problem.upper - problem.lower), problem.upper - problem.lower, 1.0)
            z_try = z0 + 1e-2 * width * rng.standard_normal(z0.shape)
            result = _solve_once(problem, z_try, opts, t0)
            if result.converged:
                break
    result.wall_time = time.perf_counter() - t0
    return result


class FunctionProblem:
    """Small dense problem assembled from plain callables (for testing and ad hoc use).

    Parameters
    ----------
    f, grad, hess : callables of ``z``
    eq, eq_jac, eq_hess : optional callables; ``eq_hess(z, lam)`` returns the
        dense Hessian of ``lam . c``
    ineq, ineq_jac, ineq_hess : same for ``g(z) <= 0``
    lower, upper : box bounds
    """

    n_coupled_tail = 0

    def __init__(self, n, f, grad, hess, lower=None, upper=None, eq=None, eq_jac=None,
                 eq_hess=None, ineq=None, ineq_jac=None, ineq_hess=None):
        self.n_vars = n
        self._f, self._grad, self._hess = f, grad, hess
        self._eq, self._eq_jac, self._eq_hess = eq, eq_jac, eq_hess
        self._in, self._in_jac, self._in_hess = ineq, ineq_jac, ineq_hess
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        z = np.zeros(n)
        self.n_eq = 0 if eq is None else len(eq(z))
        self.n_ineq = 0 if ineq is None else len(ineq(z))

    def objective(self, z):
        return float(self._f(z))

    def objective_grad(self, z):
        return np.asarray(self._grad(z), dtype=float)

    def constraints(self, z):
        c = np.zeros(0) if self._eq is None else np.asarray(self._eq(z), dtype=float)
        g = np.zeros(0) if self._in is None else np.asarray(self._in(z), dtype=float)
        return c, g

    def jacobian(self, z):
        n = self.n_vars
        Je = sp.csr_matrix((0, n)) if self._eq is None else sp.csr_matrix(np.atleast_2d(self._eq_jac(z)))
        Ji = sp.csr_matrix((0, n)) if self._in is None else sp.csr_matrix(np.atleast_2d(self._in_jac(z)))
        return Je, Ji

    def lagrangian_hessian(self, z, lam_eq, lam_ineq):
        H = np.array(self._hess(z), dtype=float)
        if self._eq is not None and self._eq_hess is not None:
            H += self._eq_hess(z, lam_eq)
        if self._in is not None and self._in_hess is not None:
            H += self._in_hess(z, lam_ineq)
        return sp.csr_matrix(H)

    def constraint_violation(self, z):
        c, g = self.constraints(z)
        eq = float(np.max(np.abs(c))) if c.size else 0.0
        ineq = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
        return eq, ineq

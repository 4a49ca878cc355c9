"""Direct transcription of the free-final-time obstacle-avoidance problem.

Decision variables are interleaved by node::

    z = [x_0, u_0, x_1, u_1, ..., x_{N-1}, u_{N-1}, x_N, T_f]

so every constraint block except the final time touches a contiguous window
of ``z``. The Newton matrices built from it are therefore banded apart from
the last row and column; the solver exploits that through ``n_coupled_tail``.

Constraint conventions: equalities ``c(z) = 0``, inequalities ``g(z) <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dynamics import rk4_jacobians, rk4_step, rk4_vjp

V_GUESS = 7.0


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 2:
            raise ValueError("obstacle center must be an (x, y) pair")
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class Margins:
    """Clearance pad and validation tolerances.

    ``epsilon`` pads every obstacle radius (vehicle size plus safety
    distance); ``delta`` is an extra slack that turns the strict clearance
    inequality into a closed one the solver can converge onto.
    """

    epsilon: float = 0.2
    delta: float = 1e-3
    defect_tol: float = 1e-6
    bound_tol: float = 1e-6
    boundary_tol: float = 1e-4

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    t_f: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.t_f = float(self.t_f)
        if self.states.ndim != 2 or self.inputs.ndim != 2:
            raise ValueError("states and inputs must be 2-D arrays")
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise ValueError(
                f"expected N+1 states for N inputs, got {self.states.shape[0]} states "
                f"and {self.inputs.shape[0]} inputs"
            )
        if not self.t_f > 0:
            raise ValueError("t_f must be positive")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dt(self) -> float:
        return self.t_f / self.n


@dataclass(frozen=True)
class Layout:
    N: int
    nx: int
    nu: int

    @property
    def stride(self) -> int:
        return self.nx + self.nu

    @property
    def n_vars(self) -> int:
        return (self.N + 1) * self.nx + self.N * self.nu + 1

    @property
    def tf_index(self) -> int:
        return self.n_vars - 1

    def state_index(self, i: int) -> np.ndarray:
        return i * self.stride + np.arange(self.nx)

    def input_index(self, i: int) -> np.ndarray:
        return i * self.stride + self.nx + np.arange(self.nu)

    def state_indices(self) -> np.ndarray:
        """(N+1, nx) array of variable indices."""
        return np.arange(self.N + 1)[:, None] * self.stride + np.arange(self.nx)[None, :]

    def input_indices(self) -> np.ndarray:
        return np.arange(self.N)[:, None] * self.stride + self.nx + np.arange(self.nu)[None, :]

    def encode(self, traj: Trajectory) -> np.ndarray:
        if traj.states.shape != (self.N + 1, self.nx) or traj.inputs.shape != (self.N, self.nu):
            raise ValueError("trajectory dimensions do not match the layout")
        z = np.empty(self.n_vars)
        z[self.state_indices()] = traj.states
        z[self.input_indices()] = traj.inputs
        z[self.tf_index] = traj.t_f
        return z

    def decode(self, z) -> Trajectory:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_vars,):
            raise ValueError(f"decision vector must have length {self.n_vars}, got {z.shape}")
        return Trajectory(
            states=z[self.state_indices()].copy(),
            inputs=z[self.input_indices()].copy(),
            t_f=z[self.tf_index],
        )


class NlpProblem:
    """Minimum-time NLP over a fixed subset of obstacles.

    Equality blocks (in row order): ``defects``, ``initial``, ``final``,
    ``quat_norm`` (quadrotor only). Inequality blocks: ``dt_cap`` followed by
    one ``N+1``-row clearance block per active obstacle, in active order.
    """

    T_MIN = 0.1

    def __init__(self, model, x_initial, x_final, obstacles, active, N, dt_max, margins):
        self.model = model
        self.layout = Layout(N, model.nx, model.nu)
        self.N = N
        self.dt_max = float(dt_max)
        self.margins = margins
        self.x_initial = np.asarray(x_initial, dtype=float)
        self.x_final = np.asarray(x_final, dtype=float)
        self.active = tuple(int(a) for a in active)
        self.obstacles = [obstacles[a] for a in self.active]
        self.centers = np.array([o.center for o in self.obstacles], dtype=float).reshape(-1, 2)
        self.pad_sq = np.array(
            [(o.radius + margins.epsilon + margins.delta) ** 2 for o in self.obstacles]
        )
        self.has_quat = model.kind == "quadrotor-3d"
        self.n_coupled_tail = 1

        nx, nu = model.nx, model.nu
        L = self.layout
        self.n_vars = L.n_vars

        eq_sizes = [("defects", N * nx), ("initial", nx), ("final", nx)]
        if self.has_quat:
            eq_sizes.append(("quat_norm", N + 1))
        self.eq_blocks = {}
        row = 0
        for name, size in eq_sizes:
            self.eq_blocks[name] = slice(row, row + size)
            row += size
        self.n_eq = row

        self.ineq_blocks = {"dt_cap": slice(0, 1)}
        row = 1
        for k, idx in enumerate(self.active):
            self.ineq_blocks[f"obstacle:{idx}"] = slice(row, row + N + 1)
            row += N + 1
        self.n_ineq = row

        xlo, xhi = model.state_bounds()
        ulo, uhi = model.input_bounds()
        lo = np.empty(self.n_vars)
        hi = np.empty(self.n_vars)
        lo[L.state_indices()] = xlo
        hi[L.state_indices()] = xhi
        lo[L.input_indices()] = ulo
        hi[L.input_indices()] = uhi
        lo[L.tf_index] = self.T_MIN
        hi[L.tf_index] = N * self.dt_max
        self.lower = lo
        self.upper = hi

        self._build_sparsity()

    # ------------------------------------------------------------------
    # sparsity

    def _build_sparsity(self):
        L = self.layout
        N, nx, nu = self.N, self.model.nx, self.model.nu
        Xi = L.state_indices()
        Ui = L.input_indices()
        rows, cols = [], []
        # defects: x_{i+1} - F(x_i, u_i, T_f/N)
        drow = np.arange(N)[:, None] * nx + np.arange(nx)[None, :]  # (N, nx)
        rows.append(np.repeat(drow[:, :, None], nx, axis=2).ravel())
        cols.append(np.broadcast_to(Xi[:-1, None, :], (N, nx, nx)).ravel())
        rows.append(np.repeat(drow[:, :, None], nu, axis=2).ravel())
        cols.append(np.broadcast_to(Ui[:, None, :], (N, nx, nu)).ravel())
        rows.append(drow.ravel())
        cols.append(Xi[1:].ravel())
        rows.append(drow.ravel())
        cols.append(np.full(N * nx, L.tf_index))
        self._n_defect_nz = (N * nx * nx, N * nx * nu, N * nx, N * nx)
        b = self.eq_blocks
        rows.append(b["initial"].start + np.arange(nx))
        cols.append(Xi[0])
        rows.append(b["final"].start + np.arange(nx))
        cols.append(Xi[N])
        if self.has_quat:
            rows.append(np.repeat(b["quat_norm"].start + np.arange(N + 1), 4))
            cols.append(Xi[:, 3:7].ravel())
        self._eq_rows = np.concatenate(rows)
        self._eq_cols = np.concatenate(cols)

        ix, iy = self.model.xy_index
        rows = [np.array([0])]
        cols = [np.array([L.tf_index])]
        for k in range(len(self.active)):
            start = 1 + k * (N + 1)
            r = np.repeat(start + np.arange(N + 1), 2)
            c = np.stack([Xi[:, ix], Xi[:, iy]], axis=1).ravel()
            rows.append(r)
            cols.append(c)
        self._in_rows = np.concatenate(rows)
        self._in_cols = np.concatenate(cols)

    # ------------------------------------------------------------------
    # helpers

    def _split(self, z):
        L = self.layout
        X = z[L.state_indices()]
        U = z[L.input_indices()]
        tf = z[L.tf_index]
        return X, U, tf

    def decode(self, z) -> Trajectory:
        return self.layout.decode(z)

    def encode(self, traj: Trajectory) -> np.ndarray:
        return self.layout.encode(traj)

    # ------------------------------------------------------------------
    # callbacks

    def objective(self, z) -> float:
        return float(z[self.layout.tf_index])

    def objective_grad(self, z) -> np.ndarray:
        g = np.zeros(self.n_vars)
        g[self.layout.tf_index] = 1.0
        return g

    def constraints(self, z):
        """Return ``(c_eq, g_ineq)``."""
        z = np.asarray(z, dtype=float)
        X, U, tf = self._split(z)
        dt = tf / self.N
        parts = [(X[1:] - rk4_step(self.model, X[:-1], U, dt)).ravel()]
        parts.append(X[0] - self.x_initial)
        parts.append(X[-1] - self.x_final)
        if self.has_quat:
            q = X[:, 3:7]
            parts.append(np.sum(q * q, axis=1) - 1.0)
        c = np.concatenate(parts)

        g = np.empty(self.n_ineq)
        g[0] = dt - self.dt_max
        if self.active:
            P = self.model.position_xy(X)  # (N+1, 2)
            d = P[None, :, :] - self.centers[:, None, :]
            g[1:] = (self.pad_sq[:, None] - np.sum(d * d, axis=-1)).ravel()
        return c, g

    def jacobian(self, z):
        """Sparse Jacobians ``(J_eq, J_ineq)`` in CSR form, constant sparsity."""
        z = np.asarray(z, dtype=float)
        X, U, tf = self._split(z)
        N, nx = self.N, self.model.nx
        Fx, Fu, Fh = rk4_jacobians(self.model, X[:-1], U, tf / N)
        vals = [(-Fx).ravel(), (-Fu).ravel(), np.ones(N * nx), (-Fh / N).ravel()]
        vals.append(np.ones(nx))
        vals.append(np.ones(nx))
        if self.has_quat:
            vals.append((2.0 * X[:, 3:7]).ravel())
        Je = sp.csr_matrix(
            (np.concatenate(vals), (self._eq_rows, self._eq_cols)), shape=(self.n_eq, self.n_vars)
        )
        vals = [np.array([1.0 / N])]
        if self.active:
            P = self.model.position_xy(X)
            d = P[None, :, :] - self.centers[:, None, :]
            vals.append((-2.0 * d).ravel())
        Ji = sp.csr_matrix(
            (np.concatenate(vals), (self._in_rows, self._in_cols)), shape=(self.n_ineq, self.n_vars)
        )
        return Je, Ji

    def lagrangian_hessian(self, z, lam_eq, lam_ineq, fd_step=1e-6):
        """Hessian of ``f + lam_eq . c + lam_ineq . g`` as a sparse symmetric matrix.

        The dynamics term is obtained by central differences of the exact
        per-node gradient ``J_F^T lam``; all other terms are exact.
        """
        z = np.asarray(z, dtype=float)
        X, U, tf = self._split(z)
        N, nx, nu = self.N, self.model.nx, self.model.nu
        L = self.layout
        lam_def = np.asarray(lam_eq[self.eq_blocks["defects"]]).reshape(N, nx)

        # local variables per node: w = (x_i, u_i, T_f), dimension nw
        nw = nx + nu + 1
        W = np.concatenate([X[:-1], U, np.full((N, 1), tf)], axis=1)

        # all 2*nw central-difference perturbations evaluated in one batch
        scale = np.maximum(1.0, np.abs(W))
        steps = fd_step * scale  # (N, nw)
        eye = np.eye(nw)
        pert = np.concatenate([eye, -eye])[:, None, :] * steps[None, :, :]  # (2nw, N, nw)
        Wb = (W[None] + pert).reshape(-1, nw)
        lam_b = np.broadcast_to(lam_def[None], (2 * nw, N, nx)).reshape(-1, nx)
        gx, gu, gh = rk4_vjp(self.model, Wb[:, :nx], Wb[:, nx : nx + nu], Wb[:, -1] / N, lam_b)
        gh = gh / N
        G = np.concatenate([gx, gu, gh[:, None]], axis=1).reshape(2, nw, N, nw)
        # Hloc[n, :, k] = dG/dw_k
        Hloc = np.transpose((G[0] - G[1]) / (2.0 * steps.T[:, :, None]), (1, 2, 0))
        Hloc = -0.5 * (Hloc + np.transpose(Hloc, (0, 2, 1)))

        idx = np.concatenate(
            [L.state_indices()[:-1], L.input_indices(), np.full((N, 1), L.tf_index)], axis=1
        )
        rows = [np.repeat(idx[:, :, None], nw, axis=2).ravel()]
        cols = [np.repeat(idx[:, None, :], nw, axis=1).ravel()]
        vals = [Hloc.ravel()]

        Xi = L.state_indices()
        if self.has_quat:
            lq = np.asarray(lam_eq[self.eq_blocks["quat_norm"]])
            qi = Xi[:, 3:7].ravel()
            rows.append(qi)
            cols.append(qi)
            vals.append(np.repeat(2.0 * lq, 4))
        if self.active:
            lo = np.asarray(lam_ineq[1:]).reshape(len(self.active), N + 1).sum(axis=0)
            ix, iy = self.model.xy_index
            for c in (Xi[:, ix], Xi[:, iy]):
                rows.append(c)
                cols.append(c)
                vals.append(-2.0 * lo)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_vars, self.n_vars),
        )

    def constraint_violation(self, z):
        c, g = self.constraints(z)
        eq = float(np.max(np.abs(c))) if c.size else 0.0
        ineq = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
        return eq, ineq


def build_nlp(model, scenario, active, N: int = 100, dt_max: float = 0.05, margins: Margins | None = None):
    """Assemble the minimum-time NLP for ``scenario`` using only the ``active`` obstacles."""
    if margins is None:
        margins = Margins()
    if N < 2:
        raise ValueError("N must be at least 2")
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    active = list(getattr(active, "active", active))
    n_obs = len(scenario.obstacles)
    for a in active:
        if not (0 <= a < n_obs):
            raise ValueError(f"active index {a} out of range for {n_obs} obstacles")
    if len(set(active)) != len(active):
        raise ValueError("active indices must be unique")
    return NlpProblem(
        model, scenario.x_initial, scenario.x_final, scenario.obstacles, active, N, dt_max, margins
    )


def initial_guess(model, scenario, N: int, warm: Trajectory | None = None) -> np.ndarray:
    """Decision vector to start a solve from.

    A warm trajectory is passed through unchanged. Otherwise states are
    interpolated linearly between the boundary states (the quaternion is held
    at the initial attitude), inputs sit at the rest/hover value and the final
    time assumes a cruise speed of 7 m/s along the straight line.
    """
    layout = Layout(N, model.nx, model.nu)
    if warm is not None:
        return layout.encode(warm)
    x0 = np.asarray(scenario.x_initial, dtype=float)
    xf = np.asarray(scenario.x_final, dtype=float)
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    X = (1.0 - s) * x0 + s * xf
    if model.kind == "quadrotor-3d":
        X[:, 3:7] = x0[3:7]
    U = np.tile(model.rest_input(), (N, 1))
    dist = float(np.linalg.norm(model.position_xy(xf) - model.position_xy(x0)))
    if model.kind == "quadrotor-3d":
        dist = float(np.linalg.norm(xf[0:3] - x0[0:3]))
    tf = max(dist / V_GUESS, NlpProblem.T_MIN)
    return layout.encode(Trajectory(X, U, tf))


def decode(problem: NlpProblem, z) -> Trajectory:
    return problem.decode(z)


def eval_constraint_violation(problem: NlpProblem, z):
    """``(max |equality residual|, max inequality violation)`` over all rows."""
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.n_vars,):
        raise ValueError("decision vector length mismatch")
    return problem.constraint_violation(z)

"""Continuous-time vehicle models, RK4 discretization and step Jacobians.

Two models are provided: a per-axis bounded double integrator in the plane
(``PointMass2D``) and a rigid-body quadrotor driven by four rotor thrusts
(``Quadrotor``). Every function accepts a single state/input pair or a batch
with arbitrary leading dimensions; the trailing axis is the state or input
component.

Quadrotor state layout is ``[p(3), q(4), v(3), w(3)]`` with the quaternion
stored scalar-first ``(w, x, y, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)
GRAVITY = (0.0, 0.0, -9.81)


@dataclass(frozen=True)
class PointMassState:
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(2))
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise ValueError("point-mass state must be finite")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_vector(cls, x) -> "PointMassState":
        x = np.asarray(x, dtype=float)
        return cls(p=x[0:2], v=x[2:4])


@dataclass(frozen=True)
class QuadState:
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name, size in (("p", 3), ("q", 4), ("v", 3), ("w", 3)):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(size)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"quadrotor state component {name!r} must be finite")
            object.__setattr__(self, name, arr)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v, self.w])

    @classmethod
    def from_vector(cls, x) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return cls(p=x[0:3], q=x[3:7], v=x[7:10], w=x[10:13])

    @classmethod
    def hover_at(cls, position) -> "QuadState":
        return cls(p=position, q=[1.0, 0.0, 0.0, 0.0], v=np.zeros(3), w=np.zeros(3))


@dataclass(frozen=True)
class QuadParams:
    """Physical quadrotor parameters in SI units.

    Defaults are the airframe used in the experiments: 0.85 kg, 0.15 m arms,
    inertia diag(1, 1, 1.7) g*m^2, rotor thrust in [0, 7] N, body rates
    bounded by 15 rad/s per axis.
    """

    m: float = 0.85
    l: float = 0.15
    J: tuple = (1.0e-3, 1.0e-3, 1.7e-3)
    kappa: float = 0.05
    f_min: float = 0.0
    f_max: float = 7.0
    w_max: float = 15.0
    g: tuple = GRAVITY

    def __post_init__(self):
        if self.m <= 0 or self.l <= 0:
            raise ValueError("mass and arm length must be positive")
        if len(self.J) != 3 or min(self.J) <= 0:
            raise ValueError("inertia diagonal must have three positive entries")
        if not (0 <= self.f_min < self.f_max):
            raise ValueError("rotor thrust bounds must satisfy 0 <= f_min < f_max")
        if self.w_max <= 0:
            raise ValueError("w_max must be positive")

    @property
    def hover_thrust(self) -> float:
        return self.m * abs(self.g[2]) / 4.0

    @property
    def mixer(self) -> np.ndarray:
        """4x4 matrix mapping rotor thrusts to [collective, tau_x, tau_y, tau_z]."""
        a = self.l / SQRT2
        k = self.kappa
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [a, -a, -a, a],
                [-a, -a, a, a],
                [k, -k, k, -k],
            ]
        )


@dataclass(frozen=True)
class WrenchDecomposition:
    f_T: np.ndarray
    tau: np.ndarray


def mix_rotors(f, params: QuadParams) -> WrenchDecomposition:
    """Collective thrust vector and body torque produced by rotor thrusts ``f``."""
    f = np.asarray(f, dtype=float)
    w = f @ params.mixer.T
    f_T = np.zeros(f.shape[:-1] + (3,))
    f_T[..., 2] = w[..., 0]
    return WrenchDecomposition(f_T=f_T, tau=w[..., 1:4])


# --------------------------------------------------------------------------
# quaternion helpers (scalar first)


def quat_multiply(a, b):
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_rotation(q):
    """Rotation matrix of a unit quaternion (batched)."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    R = np.stack(
        [
            np.stack([w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z], -1),
        ],
        axis=-2,
    )
    return R


def _body_z(q):
    # third column of R(q); homogeneous quadratic so derivatives stay simple
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([2 * (x * z + w * y), 2 * (y * z - w * x), w * w - x * x - y * y + z * z], -1)


def _body_z_jac(q):
    w, x, y, z = np.moveaxis(q, -1, 0)
    cols = [
        np.stack([2 * y, -2 * x, 2 * w], -1),
        np.stack([2 * z, -2 * w, -2 * x], -1),
        np.stack([2 * w, 2 * z, -2 * y], -1),
        np.stack([2 * x, 2 * y, 2 * z], -1),
    ]
    return np.stack(cols, axis=-1)


# --------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class PointMass2D:
    """Planar double integrator ``p' = v, v' = u`` with ``|u_i| <= a_max``."""

    a_max: float = 10.0
    kind: str = field(default="point-mass-2d", init=False)
    nx: int = field(default=4, init=False)
    nu: int = field(default=2, init=False)

    def __post_init__(self):
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")

    def deriv(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.concatenate([x[..., 2:4], np.broadcast_to(u, x.shape[:-1] + (2,))], axis=-1)

    def deriv_jac(self, x, u):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        A = np.zeros(batch + (4, 4))
        A[..., 0, 2] = 1.0
        A[..., 1, 3] = 1.0
        B = np.zeros(batch + (4, 2))
        B[..., 2, 0] = 1.0
        B[..., 3, 1] = 1.0
        return A, B

    def input_bounds(self):
        return np.full(2, -self.a_max), np.full(2, self.a_max)

    def state_bounds(self):
        return np.full(4, -np.inf), np.full(4, np.inf)

    def rest_input(self):
        return np.zeros(2)

    def position_xy(self, x):
        return np.asarray(x)[..., 0:2]

    @property
    def xy_index(self):
        return (0, 1)

    def renormalize(self, x):
        return x

    def renormalize_jac(self, x):
        return None


@dataclass(frozen=True)
class Quadrotor:
    """Rigid-body quadrotor with single-rotor thrust inputs."""

    params: QuadParams = field(default_factory=QuadParams)
    kind: str = field(default="quadrotor-3d", init=False)
    nx: int = field(default=13, init=False)
    nu: int = field(default=4, init=False)

    def deriv(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        P = self.params
        J = np.asarray(P.J)
        q, v, w = x[..., 3:7], x[..., 7:10], x[..., 10:13]
        wrench = u @ P.mixer.T
        thrust = wrench[..., 0:1]
        tau = wrench[..., 1:4]
        dv = thrust / P.m * _body_z(q) + np.asarray(P.g)
        wq = np.concatenate([np.zeros(w.shape[:-1] + (1,)), w], axis=-1)
        dq = 0.5 * quat_multiply(q, wq)
        dw = (tau - np.cross(w, J * w)) / J
        return np.concatenate([v, dq, dv, dw], axis=-1)

    def deriv_jac(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        P = self.params
        J = np.asarray(P.J)
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        x = np.broadcast_to(x, batch + (13,))
        u = np.broadcast_to(u, batch + (4,))
        qw, qx, qy, qz = (x[..., k] for k in range(3, 7))
        a, b, c = (x[..., k] for k in range(10, 13))
        thrust = u.sum(axis=-1)
        A = np.zeros(batch + (13, 13))
        B = np.zeros(batch + (13, 4))
        # p' = v
        A[..., 0, 7] = A[..., 1, 8] = A[..., 2, 9] = 1.0
        # q' = 0.5 * Omega(w) q = 0.5 * Xi(q) w
        A[..., 3, 4], A[..., 3, 5], A[..., 3, 6] = -0.5 * a, -0.5 * b, -0.5 * c
        A[..., 4, 3], A[..., 4, 5], A[..., 4, 6] = 0.5 * a, 0.5 * c, -0.5 * b
        A[..., 5, 3], A[..., 5, 4], A[..., 5, 6] = 0.5 * b, -0.5 * c, 0.5 * a
        A[..., 6, 3], A[..., 6, 4], A[..., 6, 5] = 0.5 * c, 0.5 * b, -0.5 * a
        A[..., 3, 10], A[..., 3, 11], A[..., 3, 12] = -0.5 * qx, -0.5 * qy, -0.5 * qz
        A[..., 4, 10], A[..., 4, 11], A[..., 4, 12] = 0.5 * qw, -0.5 * qz, 0.5 * qy
        A[..., 5, 10], A[..., 5, 11], A[..., 5, 12] = 0.5 * qz, 0.5 * qw, -0.5 * qx
        A[..., 6, 10], A[..., 6, 11], A[..., 6, 12] = -0.5 * qy, 0.5 * qx, 0.5 * qw
        # v' = thrust/m * R(q) e_z + g
        A[..., 7:10, 3:7] = (thrust / P.m)[..., None, None] * _body_z_jac(x[..., 3:7])
        B[..., 7:10, :] = (_body_z(x[..., 3:7]) / P.m)[..., :, None]
        # w' = J^-1 (tau - w x Jw)
        Jx, Jy, Jz = J
        A[..., 10, 11] = -(Jz - Jy) * c / Jx
        A[..., 10, 12] = -(Jz - Jy) * b / Jx
        A[..., 11, 10] = -(Jx - Jz) * c / Jy
        A[..., 11, 12] = -(Jx - Jz) * a / Jy
        A[..., 12, 10] = -(Jy - Jx) * b / Jz
        A[..., 12, 11] = -(Jy - Jx) * a / Jz
        B[..., 10:13, :] = P.mixer[1:4] / J[:, None]
        return A, B

    def input_bounds(self):
        P = self.params
        return np.full(4, P.f_min), np.full(4, P.f_max)

    def state_bounds(self):
        lo = np.full(13, -np.inf)
        hi = np.full(13, np.inf)
        lo[10:13] = -self.params.w_max
        hi[10:13] = self.params.w_max
        return lo, hi

    def rest_input(self):
        return np.full(4, self.params.hover_thrust)

    def position_xy(self, x):
        return np.asarray(x)[..., 0:2]

    @property
    def xy_index(self):
        return (0, 1)

    def renormalize(self, x):
        x = np.array(x, dtype=float, copy=True)
        q = x[..., 3:7]
        x[..., 3:7] = q / np.sqrt(np.sum(q * q, axis=-1, keepdims=True))
        return x

    def renormalize_jac(self, x):
        """Jacobian of ``renormalize`` restricted to the quaternion block (4x4)."""
        q = np.asarray(x)[..., 3:7]
        nrm = np.sqrt(np.sum(q * q, axis=-1))
        qh = q / nrm[..., None]
        return (np.eye(4) - qh[..., :, None] * qh[..., None, :]) / nrm[..., None, None]


def make_model(kind: str, **kwargs):
    if kind in ("point-mass-2d", "point-mass"):
        return PointMass2D(**kwargs)
    if kind in ("quadrotor-3d", "quadrotor"):
        return Quadrotor(**kwargs)
    raise ValueError(f"unknown model kind {kind!r}")


def point_mass_deriv(x, u):
    return PointMass2D().deriv(x, u)


def quad_deriv(x, f, params: QuadParams = QuadParams()):
    return Quadrotor(params).deriv(x, f)


# --------------------------------------------------------------------------
# discretization


def _raw_rk4(model, x, u, dt):
    dt = np.asarray(dt, dtype=float)[..., None]
    k1 = model.deriv(x, u)
    k2 = model.deriv(x + 0.5 * dt * k1, u)
    k3 = model.deriv(x + 0.5 * dt * k2, u)
    k4 = model.deriv(x + dt * k3, u)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(model, x, u, dt):
    """One classical RK4 step; the quadrotor quaternion is renormalized once after it."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(np.asarray(dt) <= 0):
        raise ValueError("dt must be positive")
    return model.renormalize(_raw_rk4(model, x, u, dt))


def rk4_jacobians(model, x, u, dt):
    """Exact derivatives of :func:`rk4_step` with respect to state, input and step.

    The chain rule is carried through the four stages analytically using the
    model's continuous-time Jacobians.

    Returns
    -------
    Fx : (..., nx, nx)
    Fu : (..., nx, nu)
    Fdt : (..., nx)
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], np.shape(dt))
    x = np.broadcast_to(x, batch + (model.nx,))
    u = np.broadcast_to(u, batch + (model.nu,))
    h = np.broadcast_to(np.asarray(dt, dtype=float), batch)
    hc = h[..., None]
    hm = h[..., None, None]
    I = np.eye(model.nx)

    def stage(xs, dxs_dx, dxs_du, dxs_dh):
        k = model.deriv(xs, u)
        A, B = model.deriv_jac(xs, u)
        return (
            k,
            A @ dxs_dx,
            A @ dxs_du + B,
            np.einsum("...ij,...j->...i", A, dxs_dh),
        )

    zero_u = np.zeros(batch + (model.nx, model.nu))
    zero_h = np.zeros(batch + (model.nx,))
    eye_x = np.broadcast_to(I, batch + (model.nx, model.nx))

    k1, k1x, k1u, k1h = stage(x, eye_x, zero_u, zero_h)
    k2, k2x, k2u, k2h = stage(
        x + 0.5 * hc * k1, eye_x + 0.5 * hm * k1x, 0.5 * hm * k1u, 0.5 * k1 + 0.5 * hc * k1h
    )
    k3, k3x, k3u, k3h = stage(
        x + 0.5 * hc * k2, eye_x + 0.5 * hm * k2x, 0.5 * hm * k2u, 0.5 * k2 + 0.5 * hc * k2h
    )
    k4, k4x, k4u, k4h = stage(x + hc * k3, eye_x + hm * k3x, hm * k3u, k3 + hc * k3h)

    ksum = k1 + 2.0 * k2 + 2.0 * k3 + k4
    xn = x + hc / 6.0 * ksum
    Fx = eye_x + hm / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    Fu = hm / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    Fh = ksum / 6.0 + hc / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)

    Nq = model.renormalize_jac(xn)
    if Nq is not None:
        Fx = Fx.copy()
        Fu = Fu.copy()
        Fx[..., 3:7, :] = Nq @ Fx[..., 3:7, :]
        Fu[..., 3:7, :] = Nq @ Fu[..., 3:7, :]
        Fh[..., 3:7] = np.einsum("...ij,...j->...i", Nq, Fh[..., 3:7])
    return Fx, Fu, Fh


def rk4_vjp(model, x, u, dt, lam):
    """Vector-Jacobian product ``lam^T d rk4_step`` by a reverse pass over the stages.

    Returns the gradients of ``lam . rk4_step(x, u, dt)`` with respect to
    ``x``, ``u`` and ``dt``. Much cheaper than :func:`rk4_jacobians` when
    only a single contraction is needed.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    h = np.asarray(dt, dtype=float)[..., None]
    k1 = model.deriv(x, u)
    x2 = x + 0.5 * h * k1
    k2 = model.deriv(x2, u)
    x3 = x + 0.5 * h * k2
    k3 = model.deriv(x3, u)
    x4 = x + h * k3
    k4 = model.deriv(x4, u)
    ksum = k1 + 2.0 * k2 + 2.0 * k3 + k4
    xn = x + h / 6.0 * ksum

    Nq = model.renormalize_jac(xn)
    abar = lam
    if Nq is not None:
        abar = lam.copy()
        abar[..., 3:7] = np.einsum("...ji,...j->...i", Nq, lam[..., 3:7])

    def mv(M, v):
        return np.einsum("...ji,...j->...i", M, v)

    xbar = abar.copy()
    hbar = np.sum(ksum * abar, axis=-1) / 6.0
    kb3 = h / 3.0 * abar
    kb2 = h / 3.0 * abar
    kb1 = h / 6.0 * abar

    A, B = model.deriv_jac(x4, u)
    kb4 = h / 6.0 * abar
    s4 = mv(A, kb4)
    ubar = mv(B, kb4)
    xbar += s4
    kb3 = kb3 + h * s4
    hbar += np.sum(k3 * s4, axis=-1)

    A, B = model.deriv_jac(x3, u)
    s3 = mv(A, kb3)
    ubar += mv(B, kb3)
    xbar += s3
    kb2 = kb2 + 0.5 * h * s3
    hbar += 0.5 * np.sum(k2 * s3, axis=-1)

    A, B = model.deriv_jac(x2, u)
    s2 = mv(A, kb2)
    ubar += mv(B, kb2)
    xbar += s2
    kb1 = kb1 + 0.5 * h * s2
    hbar += 0.5 * np.sum(k1 * s2, axis=-1)

    A, B = model.deriv_jac(x, u)
    xbar += mv(A, kb1)
    ubar += mv(B, kb1)
    return xbar, ubar, hbar


def rollout(model, x0, U, dt):
    """Propagate ``x0`` through the input sequence ``U``; returns ``len(U) + 1`` states."""
    U = np.asarray(U, dtype=float)
    X = np.empty((U.shape[0] + 1, model.nx))
    X[0] = x0
    for i in range(U.shape[0]):
        X[i + 1] = rk4_step(model, X[i], U[i], dt)
    return X

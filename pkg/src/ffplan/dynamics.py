"""6-DOF free-flyer rigid-body model.

The 13-dimensional state is [r, v, q, w]: position (m), velocity (m/s),
attitude quaternion, and body-frame angular velocity (rad/s). Quaternions
are scalar-last, (x, y, z, w); this convention is fixed here and used by
every other module. Controls are the 6-vector [F, M]: body force (N) and
moment (N*m).

Continuous dynamics:

    dr/dt = v
    dv/dt = F / m
    dq/dt = 0.5 * Xi(w) q
    dw/dt = J^-1 (M - w x J w)

Discretization is classical RK4 with zero-order-hold controls, followed by
quaternion re-normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 13
CONTROL_DIM = 6

# state-vector component slices
R_SLC = slice(0, 3)
V_SLC = slice(3, 6)
Q_SLC = slice(6, 10)
W_SLC = slice(10, 13)
F_SLC = slice(0, 3)
M_SLC = slice(3, 6)

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def _vec(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


@dataclass
class FreeFlyerState:
    """Single free-flyer state; quaternion is scalar-last (x, y, z, w)."""

    r: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.r = _vec(self.r, 3, "r")
        self.v = _vec(self.v, 3, "v")
        self.q = _vec(self.q, 4, "q")
        self.w = _vec(self.w, 3, "w")

    @classmethod
    def from_vector(cls, x) -> "FreeFlyerState":
        x = _vec(x, STATE_DIM, "state vector")
        return cls(x[R_SLC], x[V_SLC], x[Q_SLC], x[W_SLC])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.v, self.q, self.w])

    def normalized(self) -> "FreeFlyerState":
        return FreeFlyerState(self.r, self.v, quat_normalize(self.q), self.w)


@dataclass
class ControlInput:
    """Body-frame force (N) and moment (N*m)."""

    F: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.F = _vec(self.F, 3, "F")
        self.M = _vec(self.M, 3, "M")

    @classmethod
    def from_vector(cls, u) -> "ControlInput":
        u = _vec(u, CONTROL_DIM, "control vector")
        return cls(u[F_SLC], u[M_SLC])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.F, self.M])


@dataclass
class VehicleParams:
    """Mass/inertia properties, bounding-sphere radius and motion limits.

    Defaults are desk-scale stand-ins for a 30-cm cube-shaped free flyer;
    they are configuration values, not measured constants.
    """

    m: float = 9.58
    J: np.ndarray = field(default_factory=lambda: 0.153 * np.eye(3))
    radius: float = 0.26
    v_max: float = 0.5
    w_max: float = 0.5
    F_max: float = 0.85
    M_max: float = 0.25

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        if self.m <= 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if self.J.shape != (3, 3):
            raise ValueError(f"J must be 3x3, got {self.J.shape}")
        if not np.allclose(self.J, self.J.T, atol=1e-12):
            raise ValueError("J must be symmetric")
        if np.min(np.linalg.eigvalsh(self.J)) <= 0:
            raise ValueError("J must be positive definite")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        for name in ("v_max", "w_max", "F_max", "M_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        self._J_inv = np.linalg.inv(self.J)

    @property
    def J_inv(self) -> np.ndarray:
        return self._J_inv


@dataclass
class LinearizedStep:
    """Affine model of one discrete step: x_next ~ A x + B u + c."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray


# ---------------------------------------------------------------------------
# quaternion helpers (scalar-last)
# ---------------------------------------------------------------------------


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def quat_multiply(q1, q2) -> np.ndarray:
    """Hamilton product q1 * q2, both scalar-last."""
    v1, w1 = q1[:3], q1[3]
    v2, w2 = q2[:3], q2[3]
    return np.concatenate([w1 * v2 + w2 * v1 + np.cross(v1, v2), [w1 * w2 - v1 @ v2]])


def quat_conjugate(q) -> np.ndarray:
    return np.concatenate([-q[:3], [q[3]]])


def quat_geodesic_angle(q1, q2) -> float:
    """Rotation angle (rad) between the attitudes q1, q2 represent."""
    d = abs(float(np.dot(quat_normalize(q1), quat_normalize(q2))))
    return 2.0 * float(np.arccos(min(d, 1.0)))


def quat_slerp(q0, q1, s):
    """Spherical interpolation, shorter path; s may be scalar or array."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(q0 @ q1)
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if dot > 1.0 - 1e-12:
        out = (1.0 - s)[:, None] * q0 + s[:, None] * q1
    else:
        ang = np.arccos(min(dot, 1.0))
        out = (np.sin((1.0 - s) * ang)[:, None] * q0 + np.sin(s * ang)[:, None] * q1) / np.sin(ang)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if out.shape[0] == 1 else out


def rotate_vector(q, vec) -> np.ndarray:
    """Rotate vec from body to world frame by unit quaternion q."""
    qv = np.concatenate([vec, [0.0]])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[:3]


def quat_kinematics_matrix(w) -> np.ndarray:
    """Skew-symmetric Xi(w) with dq/dt = 0.5 * Xi(w) q for scalar-last q."""
    wx, wy, wz = w
    return np.array(
        [
            [0.0, wz, -wy, wx],
            [-wz, 0.0, wx, wy],
            [wy, -wx, 0.0, wz],
            [-wx, -wy, -wz, 0.0],
        ]
    )


def _quat_rate_wrt_w(q) -> np.ndarray:
    """G(q) with Xi(w) q = G(q) w; 4x3."""
    qx, qy, qz, qw = q
    return np.array(
        [
            [qw, -qz, qy],
            [qz, qw, -qx],
            [-qy, qx, qw],
            [-qx, -qy, -qz],
        ]
    )


def _skew(a) -> np.ndarray:
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


def _as_state_vector(x) -> np.ndarray:
    if isinstance(x, FreeFlyerState):
        return x.to_vector()
    return np.asarray(x, dtype=float)


def _as_control_vector(u) -> np.ndarray:
    if isinstance(u, ControlInput):
        return u.to_vector()
    return np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def continuous_dynamics(x, u, p: VehicleParams) -> np.ndarray:
    """Time derivative of the 13-dim state."""
    x = _as_state_vector(x)
    u = _as_control_vector(u)
    w = x[W_SLC]
    xdot = np.empty(STATE_DIM)
    xdot[R_SLC] = x[V_SLC]
    xdot[V_SLC] = u[F_SLC] / p.m
    xdot[Q_SLC] = 0.5 * quat_kinematics_matrix(w) @ x[Q_SLC]
    xdot[W_SLC] = p.J_inv @ (u[M_SLC] - np.cross(w, p.J @ w))
    return xdot


def _continuous_jacobians(x, u, p: VehicleParams):
    w = x[W_SLC]
    Jx = np.zeros((STATE_DIM, STATE_DIM))
    Ju = np.zeros((STATE_DIM, CONTROL_DIM))
    Jx[R_SLC, V_SLC] = np.eye(3)
    Jx[Q_SLC, Q_SLC] = 0.5 * quat_kinematics_matrix(w)
    Jx[Q_SLC, W_SLC] = 0.5 * _quat_rate_wrt_w(x[Q_SLC])
    Jx[W_SLC, W_SLC] = p.J_inv @ (_skew(p.J @ w) - _skew(w) @ p.J)
    Ju[V_SLC, F_SLC] = np.eye(3) / p.m
    Ju[W_SLC, M_SLC] = p.J_inv
    return Jx, Ju


def discrete_step(x, u, p: VehicleParams, dt: float, normalize: bool = True) -> np.ndarray:
    """One RK4 step with zero-order-hold control.

    The quaternion is re-normalized afterwards; pass normalize=False to
    observe the raw integrator drift.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _as_state_vector(x)
    u = _as_control_vector(u)
    k1 = continuous_dynamics(x, u, p)
    k2 = continuous_dynamics(x + 0.5 * dt * k1, u, p)
    k3 = continuous_dynamics(x + 0.5 * dt * k2, u, p)
    k4 = continuous_dynamics(x + dt * k3, u, p)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if normalize:
        out[Q_SLC] = out[Q_SLC] / np.linalg.norm(out[Q_SLC])
    return out


def linearize_step(x_ref, u_ref, p: VehicleParams, dt: float) -> LinearizedStep:
    """Exact Jacobians of discrete_step (RK4 stages plus re-normalization)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _as_state_vector(x_ref)
    u = _as_control_vector(u_ref)

    eye = np.eye(STATE_DIM)
    stage_x = [x]
    k = []
    Dx = []
    Du = []
    offsets = (0.0, 0.5 * dt, 0.5 * dt, dt)
    for i in range(4):
        xi = x if i == 0 else x + offsets[i] * k[i - 1]
        Jx, Ju = _continuous_jacobians(xi, u, p)
        if i == 0:
            Dx.append(Jx)
            Du.append(Ju)
        else:
            Dx.append(Jx @ (eye + offsets[i] * Dx[i - 1]))
            Du.append(Jx @ (offsets[i] * Du[i - 1]) + Ju)
        k.append(continuous_dynamics(xi, u, p))
        stage_x.append(xi)

    A = eye + (dt / 6.0) * (Dx[0] + 2.0 * Dx[1] + 2.0 * Dx[2] + Dx[3])
    B = (dt / 6.0) * (Du[0] + 2.0 * Du[1] + 2.0 * Du[2] + Du[3])

    # chain through the quaternion re-normalization
    raw = x + (dt / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3])
    q_raw = raw[Q_SLC]
    n = np.linalg.norm(q_raw)
    q_hat = q_raw / n
    Pn = np.eye(STATE_DIM)
    Pn[Q_SLC, Q_SLC] = (np.eye(4) - np.outer(q_hat, q_hat)) / n
    A = Pn @ A
    B = Pn @ B

    out = raw.copy()
    out[Q_SLC] = q_hat
    c = out - A @ x - B @ u
    return LinearizedStep(A=A, B=B, c=c)

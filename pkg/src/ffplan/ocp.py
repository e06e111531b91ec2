"""Parametric trajectory-generation problem: parameters, cost, feasibility
checks, and the straight-line/slerp cold-start initialization.

The objective is the pure control effort sum(u_t^T R u_t). Terminal
conditions: position within delta_goal of the goal, attitude within
delta_att (geodesic), and zero terminal linear/angular velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .dynamics import FreeFlyerState, VehicleParams
from .geometry import ObstacleBox, signed_distance
from . import kvfile


@dataclass
class Workspace:
    """Axis-aligned environment bounds (m)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (3,) or self.upper.shape != (3,):
            raise ValueError("workspace bounds must be 3-vectors")
        if np.any(self.upper < self.lower):
            raise ValueError("workspace upper bound below lower bound")

    def contains(self, r, tol: float = 1e-9) -> bool:
        r = np.asarray(r, dtype=float)
        return bool(np.all(r >= self.lower - tol) and np.all(r <= self.upper + tol))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


DEFAULT_DELTA_GOAL = 0.05
DEFAULT_DELTA_SD = 0.05
DEFAULT_DELTA_ATT = 1e-2


@dataclass
class ProblemParameters:
    """Everything that defines one trajectory-generation instance."""

    x_init: FreeFlyerState
    r_goal: np.ndarray
    q_goal: np.ndarray
    N: int
    dt: float
    delta_goal: float = DEFAULT_DELTA_GOAL
    delta_sd: float = DEFAULT_DELTA_SD
    delta_att: float = DEFAULT_DELTA_ATT
    obstacles: list = field(default_factory=list)
    R: np.ndarray = field(default_factory=lambda: np.eye(6))
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    workspace: Workspace = field(
        default_factory=lambda: Workspace(np.full(3, -10.0), np.full(3, 10.0))
    )

    def __post_init__(self):
        self.r_goal = np.asarray(self.r_goal, dtype=float)
        self.q_goal = dyn.quat_normalize(np.asarray(self.q_goal, dtype=float))
        self.R = np.asarray(self.R, dtype=float)
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.delta_goal <= 0:
            raise ValueError("delta_goal must be positive")
        if self.delta_sd < 0:
            raise ValueError("delta_sd must be >= 0")
        if self.R.shape != (6, 6) or not np.allclose(self.R, self.R.T, atol=1e-12):
            raise ValueError("R must be a symmetric 6x6 matrix")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise ValueError("R must be positive definite")
        if not self.workspace.contains(self.x_init.r):
            raise ValueError("x_init must lie inside the workspace")

    @property
    def horizon(self) -> float:
        return self.N * self.dt


@dataclass
class Trajectory:
    """Discrete state/control trajectory: (N+1) states, N controls."""

    states: np.ndarray  # (N+1, 13)
    controls: np.ndarray  # (N, 6)
    dt: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != dyn.STATE_DIM:
            raise ValueError("states must be (N+1, 13)")
        if self.controls.ndim != 2 or self.controls.shape[1] != dyn.CONTROL_DIM:
            raise ValueError("controls must be (N, 6)")
        if self.states.shape[0] != self.controls.shape[0] + 1:
            raise ValueError("need exactly one more state than controls")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def N(self) -> int:
        return self.controls.shape[0]

    def state(self, t: int) -> FreeFlyerState:
        return FreeFlyerState.from_vector(self.states[t])

    def positions(self) -> np.ndarray:
        return self.states[:, dyn.R_SLC]

    def copy(self) -> "Trajectory":
        return Trajectory(self.states.copy(), self.controls.copy(), self.dt)


@dataclass
class FeasibilityReport:
    """Worst-case violation of each constraint family over the trajectory."""

    max_dynamics_defect: float
    speed: float
    spin: float
    force: float
    moment: float
    obstacle: float
    quat_norm: float
    goal_pos: float
    goal_att: float
    terminal_vel: float
    terminal_spin: float

    @property
    def max_constraint_violation(self) -> float:
        return max(
            self.speed,
            self.spin,
            self.force,
            self.moment,
            self.obstacle,
            self.quat_norm,
            self.goal_pos,
            self.goal_att,
            self.terminal_vel,
            self.terminal_spin,
        )


def cost(traj: Trajectory, params: ProblemParameters) -> float:
    """Control effort sum_t u_t^T R u_t."""
    return float(np.einsum("ti,ij,tj->", traj.controls, params.R, traj.controls))


def evaluate_feasibility(
    traj: Trajectory, params: ProblemParameters, tol=None
) -> FeasibilityReport:
    """Measure worst violations of the nonlinear constraints.

    tol optionally overrides (delta_goal, delta_sd, delta_att).
    """
    delta_goal = params.delta_goal
    delta_sd = params.delta_sd
    delta_att = params.delta_att
    if tol is not None:
        delta_goal, delta_sd, delta_att = tol

    veh = params.vehicle
    v_norm = np.linalg.norm(traj.states[:, dyn.V_SLC], axis=1)
    w_norm = np.linalg.norm(traj.states[:, dyn.W_SLC], axis=1)
    f_norm = np.linalg.norm(traj.controls[:, dyn.F_SLC], axis=1)
    m_norm = np.linalg.norm(traj.controls[:, dyn.M_SLC], axis=1)
    q_norm = np.linalg.norm(traj.states[:, dyn.Q_SLC], axis=1)

    obstacle = 0.0
    for obs in params.obstacles:
        for r in traj.positions():
            sd = signed_distance(r, veh.radius, obs)
            obstacle = max(obstacle, delta_sd - sd)
    obstacle = max(obstacle, 0.0)

    defect = 0.0
    for t in range(traj.N):
        pred = dyn.discrete_step(traj.states[t], traj.controls[t], veh, traj.dt)
        defect = max(defect, float(np.linalg.norm(traj.states[t + 1] - pred)))

    x_N = traj.states[-1]
    goal_pos = max(float(np.linalg.norm(x_N[dyn.R_SLC] - params.r_goal)) - delta_goal, 0.0)
    goal_att = max(dyn.quat_geodesic_angle(x_N[dyn.Q_SLC], params.q_goal) - delta_att, 0.0)

    return FeasibilityReport(
        max_dynamics_defect=defect,
        speed=max(float(np.max(v_norm)) - veh.v_max, 0.0),
        spin=max(float(np.max(w_norm)) - veh.w_max, 0.0),
        force=max(float(np.max(f_norm)) - veh.F_max, 0.0) if traj.N else 0.0,
        moment=max(float(np.max(m_norm)) - veh.M_max, 0.0) if traj.N else 0.0,
        obstacle=obstacle,
        quat_norm=float(np.max(np.abs(q_norm - 1.0))),
        goal_pos=goal_pos,
        goal_att=goal_att,
        terminal_vel=float(np.linalg.norm(x_N[dyn.V_SLC])),
        terminal_spin=float(np.linalg.norm(x_N[dyn.W_SLC])),
    )


def straight_line_initialization(params: ProblemParameters) -> Trajectory:
    """Cold start: linear position interpolation, slerp attitude, constant
    finite-difference velocities, zero controls."""
    N = params.N
    T = params.horizon
    x0 = params.x_init
    alpha = np.linspace(0.0, 1.0, N + 1)

    states = np.zeros((N + 1, dyn.STATE_DIM))
    states[:, dyn.R_SLC] = np.outer(1.0 - alpha, x0.r) + np.outer(alpha, params.r_goal)
    states[:, dyn.V_SLC] = (params.r_goal - x0.r) / T

    q0 = dyn.quat_normalize(x0.q)
    q1 = params.q_goal if q0 @ params.q_goal >= 0.0 else -params.q_goal
    states[:, dyn.Q_SLC] = dyn.quat_slerp(q0, q1, alpha).reshape(N + 1, 4)

    # constant body rate realizing the slerp path
    dq = dyn.quat_multiply(dyn.quat_conjugate(q0), q1)
    angle = 2.0 * np.arccos(np.clip(abs(dq[3]), 0.0, 1.0))
    axis_norm = np.linalg.norm(dq[:3])
    if angle > 1e-12 and axis_norm > 1e-12:
        axis = dq[:3] / axis_norm
        if dq[3] < 0.0:
            axis = -axis
        states[:, dyn.W_SLC] = axis * (angle / T)

    states[0] = np.concatenate([x0.r, states[0, dyn.V_SLC], q0, states[0, dyn.W_SLC]])
    controls = np.zeros((N, dyn.CONTROL_DIM))
    return Trajectory(states=states, controls=controls, dt=params.dt)


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = {
    "start.r",
    "start.q",
    "goal.r",
    "goal.q",
    "obstacle.center",
    "obstacle.half_extents",
    "N",
    "dt",
    "limits.v_max",
    "limits.w_max",
    "limits.F_max",
    "limits.M_max",
    "weights.R_diag",
    "tolerances.delta_goal",
    "tolerances.delta_sd",
    "tolerances.delta_att",
    "vehicle.mass",
    "vehicle.inertia_diag",
    "vehicle.radius",
    "workspace.lower",
    "workspace.upper",
}


def load_problem(path) -> ProblemParameters:
    """Read a problem file in the key=value grammar; unknown keys rejected."""
    pairs = kvfile.parse_kv_file(path)
    kvfile.reject_unknown(pairs, _PROBLEM_KEYS, source=str(path))

    scalars: dict[str, str] = {}
    obstacle_centers: list[list[float]] = []
    obstacle_halves: list[list[float]] = []
    for key, value in pairs:
        if key == "obstacle.center":
            obstacle_centers.append(kvfile.as_vector(key, value, 3))
        elif key == "obstacle.half_extents":
            obstacle_halves.append(kvfile.as_vector(key, value, 3))
        else:
            if key in scalars:
                raise kvfile.KvError(f"{path}: duplicate key {key!r}")
            scalars[key] = value

    for req in ("start.r", "start.q", "goal.r", "goal.q", "N", "dt"):
        if req not in scalars:
            raise kvfile.KvError(f"{path}: missing required key {req!r}")
    if len(obstacle_centers) != len(obstacle_halves):
        raise kvfile.KvError(f"{path}: obstacle.center/half_extents counts differ")

    veh_kwargs = {}
    if "vehicle.mass" in scalars:
        veh_kwargs["m"] = kvfile.as_float("vehicle.mass", scalars["vehicle.mass"])
    if "vehicle.inertia_diag" in scalars:
        veh_kwargs["J"] = np.diag(kvfile.as_vector("vehicle.inertia_diag", scalars["vehicle.inertia_diag"], 3))
    if "vehicle.radius" in scalars:
        veh_kwargs["radius"] = kvfile.as_float("vehicle.radius", scalars["vehicle.radius"])
    for short, name in (("v_max", "v_max"), ("w_max", "w_max"), ("F_max", "F_max"), ("M_max", "M_max")):
        key = f"limits.{short}"
        if key in scalars:
            veh_kwargs[name] = kvfile.as_float(key, scalars[key])
    vehicle = VehicleParams(**veh_kwargs)

    kwargs = {}
    if "weights.R_diag" in scalars:
        kwargs["R"] = np.diag(kvfile.as_vector("weights.R_diag", scalars["weights.R_diag"], 6))
    for opt, key in (
        ("delta_goal", "tolerances.delta_goal"),
        ("delta_sd", "tolerances.delta_sd"),
        ("delta_att", "tolerances.delta_att"),
    ):
        if key in scalars:
            kwargs[opt] = kvfile.as_float(key, scalars[key])
    if "workspace.lower" in scalars or "workspace.upper" in scalars:
        if not ("workspace.lower" in scalars and "workspace.upper" in scalars):
            raise kvfile.KvError(f"{path}: workspace.lower and workspace.upper must both be given")
        kwargs["workspace"] = Workspace(
            kvfile.as_vector("workspace.lower", scalars["workspace.lower"], 3),
            kvfile.as_vector("workspace.upper", scalars["workspace.upper"], 3),
        )

    x_init = FreeFlyerState(
        r=kvfile.as_vector("start.r", scalars["start.r"], 3),
        v=np.zeros(3),
        q=dyn.quat_normalize(kvfile.as_vector("start.q", scalars["start.q"], 4)),
        w=np.zeros(3),
    )
    obstacles = [
        ObstacleBox(center=c, half_extents=h)
        for c, h in zip(obstacle_centers, obstacle_halves)
    ]
    return ProblemParameters(
        x_init=x_init,
        r_goal=kvfile.as_vector("goal.r", scalars["goal.r"], 3),
        q_goal=kvfile.as_vector("goal.q", scalars["goal.q"], 4),
        N=kvfile.as_int("N", scalars["N"]),
        dt=kvfile.as_float("dt", scalars["dt"]),
        obstacles=obstacles,
        vehicle=vehicle,
        **kwargs,
    )


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Write the t, r, v, q, w, F, M table; control columns of the final row
    (which has no control) are zero."""
    header = (
        "t,r_x,r_y,r_z,v_x,v_y,v_z,q_x,q_y,q_z,q_w,w_x,w_y,w_z,"
        "F_x,F_y,F_z,M_x,M_y,M_z"
    )
    lines = [header]
    for t in range(traj.N + 1):
        u = traj.controls[t] if t < traj.N else np.zeros(6)
        row = np.concatenate([[t * traj.dt], traj.states[t], u])
        lines.append(",".join(f"{v:.12g}" for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

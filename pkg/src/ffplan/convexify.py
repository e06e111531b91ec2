"""Convex subproblem construction around a reference trajectory.

The subproblem keeps the linearized dynamics, the initial state and the
terminal conditions as hard constraints, keeps the convex vehicle limits as
norm-ball cones, and moves the non-convex constraints (obstacle clearance,
quaternion norm) plus the trust region into hinge penalties weighted by the
current penalty weight. Hinges use nonnegative slack variables priced
linearly, so at any optimum each slack equals max(linearized violation, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import dynamics as dyn
from .conic import BallCone, BoxCone, ConicProgram, SecondOrderCone, ZeroCone
from .geometry import signed_distance, signed_distance_gradient
from .ocp import ProblemParameters, Trajectory, cost

# fraction of delta_att actually imposed in the subproblem; absorbs the
# quaternion-norm drift the geodesic measurement is sensitive to
_ATT_MARGIN = 0.9


@dataclass
class PenaltyState:
    """Current penalty weight and trust-region radius."""

    omega: float
    delta: float

    def __post_init__(self):
        if self.omega < 1.0:
            raise ValueError(f"omega must be >= 1, got {self.omega}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass
class VariableLayout:
    """Index bookkeeping for the stacked subproblem variable vector.

    Order: states (N+1 blocks of 13), controls (N blocks of 6), trust
    slacks (N+1), quaternion hinge slacks (N+1 each for the + and - side),
    then obstacle slacks (N+1 per obstacle).
    """

    N: int
    n_obs: int

    def __post_init__(self):
        self.n_states = dyn.STATE_DIM * (self.N + 1)
        self.n_controls = dyn.CONTROL_DIM * self.N
        self.off_controls = self.n_states
        self.off_tr = self.off_controls + self.n_controls
        self.off_qp = self.off_tr + (self.N + 1)
        self.off_qm = self.off_qp + (self.N + 1)
        self.off_obs = self.off_qm + (self.N + 1)
        self.n_vars = self.off_obs + self.n_obs * (self.N + 1)

    def state_indices(self, t: int) -> np.ndarray:
        return np.arange(t * dyn.STATE_DIM, (t + 1) * dyn.STATE_DIM)

    def control_indices(self, t: int) -> np.ndarray:
        base = self.off_controls + t * dyn.CONTROL_DIM
        return np.arange(base, base + dyn.CONTROL_DIM)

    def tr_index(self, t: int) -> int:
        return self.off_tr + t

    def qp_index(self, t: int) -> int:
        return self.off_qp + t

    def qm_index(self, t: int) -> int:
        return self.off_qm + t

    def obs_index(self, j: int, t: int) -> int:
        return self.off_obs + j * (self.N + 1) + t

    def pack(self, states, controls, slacks=None) -> np.ndarray:
        x = np.zeros(self.n_vars)
        x[: self.n_states] = np.asarray(states).ravel()
        x[self.off_controls : self.off_tr] = np.asarray(controls).ravel()
        if slacks is not None:
            x[self.off_tr :] = np.asarray(slacks).ravel()
        return x

    def unpack(self, x):
        states = x[: self.n_states].reshape(self.N + 1, dyn.STATE_DIM)
        controls = x[self.off_controls : self.off_tr].reshape(self.N, dyn.CONTROL_DIM)
        slacks = x[self.off_tr :]
        return states, controls, slacks


@dataclass
class ConvexSubproblem:
    """One linearized, penalized instance ready for the conic solver."""

    program: ConicProgram
    layout: VariableLayout
    pen: PenaltyState
    ref: Trajectory
    params: ProblemParameters
    obs_grads: np.ndarray  # (n_obs, N+1, 3)
    obs_rhs: np.ndarray  # (n_obs, N+1): hinge is max(rhs - g.r_t, 0)
    quat_dirs: np.ndarray  # (N+1, 4) unit reference quaternion directions
    quat_consts: np.ndarray  # (N+1,): hinge is |quat_dirs.q_t + const - 1|

    def extract_trajectory(self, x: np.ndarray) -> Trajectory:
        states, controls, _ = self.layout.unpack(x)
        return Trajectory(states=states.copy(), controls=controls.copy(), dt=self.ref.dt)

    def model_cost(self, traj: Trajectory) -> float:
        """Linearized penalized objective evaluated exactly at a candidate
        (slacks at their hinge values)."""
        value = cost(traj, self.params)
        omega = self.pen.omega
        penalty = 0.0
        for t in range(self.layout.N + 1):
            r_t = traj.states[t, dyn.R_SLC]
            for j in range(self.layout.n_obs):
                penalty += max(self.obs_rhs[j, t] - self.obs_grads[j, t] @ r_t, 0.0)
            lin_q = self.quat_dirs[t] @ traj.states[t, dyn.Q_SLC] + self.quat_consts[t] - 1.0
            penalty += abs(lin_q)
            dev = np.linalg.norm(traj.states[t] - self.ref.states[t])
            penalty += max(dev - self.pen.delta, 0.0)
        return value + omega * penalty


class _Assembler:
    def __init__(self, n_vars):
        self.rows = []
        self.cols = []
        self.vals = []
        self.cones = []
        self.n_vars = n_vars
        self.m = 0

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=np.int64))
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))

    def add_block(self, cols, mat):
        mat = np.asarray(mat, dtype=float)
        nr, nc = mat.shape
        self.add(
            np.repeat(np.arange(self.m, self.m + nr), nc),
            np.tile(np.asarray(cols, dtype=np.int64), nr),
            mat.ravel(),
        )

    def push(self, cone):
        self.cones.append(cone)
        self.m += cone.dim

    def build(self, P, q):
        rows = np.concatenate(self.rows) if self.rows else np.empty(0, dtype=np.int64)
        cols = np.concatenate(self.cols) if self.cols else np.empty(0, dtype=np.int64)
        vals = np.concatenate(self.vals) if self.vals else np.empty(0)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(self.m, self.n_vars)).tocsc()
        return ConicProgram(P=P, q=q, A=A, cones=self.cones)


def build_subproblem(
    ref: Trajectory, params: ProblemParameters, pen: PenaltyState
) -> ConvexSubproblem:
    """Assemble the conic program of the penalized convex approximation."""
    N = params.N
    if ref.N != N:
        raise ValueError(f"reference horizon {ref.N} does not match problem N={N}")
    n_obs = len(params.obstacles)
    lay = VariableLayout(N=N, n_obs=n_obs)
    veh = params.vehicle

    # objective: sum u^T R u plus omega * (all slacks), divided through by
    # omega so the solver sees a bounded cost vector at high penalty weights
    # (same minimizer; model_cost reports the unscaled value)
    P_u = sp.kron(sp.eye(N), sp.csc_matrix(2.0 * params.R / pen.omega))
    P = sp.block_diag(
        [sp.csc_matrix((lay.n_states, lay.n_states)), P_u,
         sp.csc_matrix((lay.n_vars - lay.off_tr, lay.n_vars - lay.off_tr))],
        format="csc",
    )
    q = np.zeros(lay.n_vars)
    q[lay.off_tr :] = 1.0

    asm = _Assembler(lay.n_vars)

    # initial state
    asm.add_block(lay.state_indices(0), np.eye(dyn.STATE_DIM))
    asm.push(ZeroCone(params.x_init.to_vector()))

    # linearized dynamics: A_t x_t + B_t u_t - x_{t+1} = -c_t
    for t in range(N):
        lin = dyn.linearize_step(ref.states[t], ref.controls[t], veh, params.dt)
        cols = np.concatenate(
            [lay.state_indices(t), lay.control_indices(t), lay.state_indices(t + 1)]
        )
        mat = np.hstack([lin.A, lin.B, -np.eye(dyn.STATE_DIM)])
        asm.add_block(cols, mat)
        asm.push(ZeroCone(-lin.c))

    # terminal rest
    asm.add_block(lay.state_indices(N)[dyn.V_SLC], np.eye(3))
    asm.push(ZeroCone(np.zeros(3)))
    asm.add_block(lay.state_indices(N)[dyn.W_SLC], np.eye(3))
    asm.push(ZeroCone(np.zeros(3)))

    # convex vehicle limits as norm balls
    for t in range(N + 1):
        asm.add_block(lay.state_indices(t)[dyn.V_SLC], np.eye(3))
        asm.push(BallCone(np.zeros(3), veh.v_max))
        asm.add_block(lay.state_indices(t)[dyn.W_SLC], np.eye(3))
        asm.push(BallCone(np.zeros(3), veh.w_max))
    for t in range(N):
        asm.add_block(lay.control_indices(t)[dyn.F_SLC], np.eye(3))
        asm.push(BallCone(np.zeros(3), veh.F_max))
        asm.add_block(lay.control_indices(t)[dyn.M_SLC], np.eye(3))
        asm.push(BallCone(np.zeros(3), veh.M_max))

    # terminal position ball and attitude ball (chordal form of the geodesic
    # tolerance: ||q - q_goal|| = 2 sin(theta/4) for unit quaternions)
    asm.add_block(lay.state_indices(N)[dyn.R_SLC], np.eye(3))
    asm.push(BallCone(params.r_goal.copy(), params.delta_goal))

    q_ref_N = ref.states[N, dyn.Q_SLC]
    att_sign = 1.0 if q_ref_N @ params.q_goal >= 0.0 else -1.0
    att_radius = 2.0 * np.sin(0.25 * _ATT_MARGIN * params.delta_att)
    asm.add_block(lay.state_indices(N)[dyn.Q_SLC], np.eye(4))
    asm.push(BallCone(att_sign * params.q_goal, att_radius))

    # linearized obstacle clearance hinges
    obs_grads = np.zeros((n_obs, N + 1, 3))
    obs_rhs = np.zeros((n_obs, N + 1))
    for j, obs in enumerate(params.obstacles):
        for t in range(N + 1):
            r_bar = ref.states[t, dyn.R_SLC]
            sd = signed_distance(r_bar, veh.radius, obs)
            g = signed_distance_gradient(r_bar, veh.radius, obs)
            rhs = params.delta_sd - sd + g @ r_bar
            obs_grads[j, t] = g
            obs_rhs[j, t] = rhs
            cols = np.concatenate([lay.state_indices(t)[dyn.R_SLC], [lay.obs_index(j, t)]])
            asm.add_block(cols, np.concatenate([g, [1.0]])[None, :])
            asm.push(BoxCone(np.array([rhs]), np.array([np.inf])))

    # linearized quaternion-norm hinges (two one-sided slacks per step).
    # The re-normalizing discrete dynamics keep the linearized norm at 1, so
    # these rows live exactly on their hinge kink; a tiny deadband plus an
    # equality-grade rho hint keeps the ADMM duals from stalling there.
    quat_deadband = 1e-6
    quat_dirs = np.zeros((N + 1, 4))
    quat_consts = np.zeros(N + 1)
    for t in range(N + 1):
        q_bar = ref.states[t, dyn.Q_SLC]
        nrm = np.linalg.norm(q_bar)
        q_hat = q_bar / nrm if nrm > 1e-6 else dyn.IDENTITY_QUAT.copy()
        const = nrm - q_hat @ q_bar
        quat_dirs[t] = q_hat
        quat_consts[t] = const
        cols_p = np.concatenate([lay.state_indices(t)[dyn.Q_SLC], [lay.qp_index(t)]])
        asm.add_block(cols_p, np.concatenate([q_hat, [-1.0]])[None, :])
        asm.push(
            BoxCone(np.array([-np.inf]), np.array([1.0 - const + quat_deadband]), rho_hint=1e3)
        )
        cols_m = np.concatenate([lay.state_indices(t)[dyn.Q_SLC], [lay.qm_index(t)]])
        asm.add_block(cols_m, np.concatenate([-q_hat, [-1.0]])[None, :])
        asm.push(
            BoxCone(np.array([-np.inf]), np.array([const - 1.0 + quat_deadband]), rho_hint=1e3)
        )

    # slack nonnegativity
    n_slack = lay.n_vars - lay.off_tr
    asm.add(
        np.arange(asm.m, asm.m + n_slack),
        np.arange(lay.off_tr, lay.n_vars),
        np.ones(n_slack),
    )
    asm.push(BoxCone(np.zeros(n_slack), np.full(n_slack, np.inf)))

    # trust-region epigraphs: (s_tr + delta, x_t - xbar_t) in SOC
    for t in range(N + 1):
        cols = np.concatenate([[lay.tr_index(t)], lay.state_indices(t)])
        mat = np.zeros((dyn.STATE_DIM + 1, dyn.STATE_DIM + 1))
        mat[0, 0] = 1.0
        mat[1:, 1:] = np.eye(dyn.STATE_DIM)
        asm.add_block(cols, mat)
        offset = np.concatenate([[pen.delta], -ref.states[t]])
        asm.push(SecondOrderCone(dim=dyn.STATE_DIM + 1, offset=offset))

    program = asm.build(P, q)
    return ConvexSubproblem(
        program=program,
        layout=lay,
        pen=pen,
        ref=ref.copy(),
        params=params,
        obs_grads=obs_grads,
        obs_rhs=obs_rhs,
        quat_dirs=quat_dirs,
        quat_consts=quat_consts,
    )


def true_penalized_cost(
    traj: Trajectory, params: ProblemParameters, pen: PenaltyState, ref: Trajectory
) -> float:
    """Nonlinear analogue of the subproblem objective: control cost plus
    omega-weighted constraint violations, 1-norm dynamics defects and
    trust-region overshoot relative to ref."""
    veh = params.vehicle
    penalty = 0.0
    N = traj.N
    for t in range(N + 1):
        x_t = traj.states[t]
        penalty += max(np.linalg.norm(x_t[dyn.V_SLC]) - veh.v_max, 0.0)
        penalty += max(np.linalg.norm(x_t[dyn.W_SLC]) - veh.w_max, 0.0)
        for obs in params.obstacles:
            sd = signed_distance(x_t[dyn.R_SLC], veh.radius, obs)
            penalty += max(params.delta_sd - sd, 0.0)
        penalty += abs(np.linalg.norm(x_t[dyn.Q_SLC]) - 1.0)
        penalty += max(np.linalg.norm(x_t - ref.states[t]) - pen.delta, 0.0)
    for t in range(N):
        u_t = traj.controls[t]
        penalty += max(np.linalg.norm(u_t[dyn.F_SLC]) - veh.F_max, 0.0)
        penalty += max(np.linalg.norm(u_t[dyn.M_SLC]) - veh.M_max, 0.0)
        pred = dyn.discrete_step(traj.states[t], u_t, veh, traj.dt)
        penalty += float(np.linalg.norm(traj.states[t + 1] - pred, 1))
    # terminal rest (v_N = w_N = 0) and the initial state are hard equalities
    # of the subproblem, so they carry no penalty term here
    x_N = traj.states[N]
    penalty += max(np.linalg.norm(x_N[dyn.R_SLC] - params.r_goal) - params.delta_goal, 0.0)
    penalty += max(dyn.quat_geodesic_angle(x_N[dyn.Q_SLC], params.q_goal) - params.delta_att, 0.0)
    return cost(traj, params) + pen.omega * penalty


def accuracy_ratio(
    candidate: Trajectory,
    subproblem_objective_at_candidate: float,
    params: ProblemParameters,
    pen: PenaltyState,
    ref: Trajectory,
    denom_floor: float = 1.0,
) -> float:
    """Relative mismatch between the nonlinear penalized objective and the
    convex model objective at the candidate; small means the convex model
    is locally trustworthy.

    The denominator is floored at unit cost scale: rotation-dominant
    problems have objectives of order 1e-3, and measuring model error
    relative to a near-zero objective would reject every step of an
    otherwise healthy solve.
    """
    true_cost = true_penalized_cost(candidate, params, pen, ref)
    denom = max(abs(subproblem_objective_at_candidate), denom_floor)
    return abs(true_cost - subproblem_objective_at_candidate) / denom

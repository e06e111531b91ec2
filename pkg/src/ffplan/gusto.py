"""Sequential convex programming loop with trust-region and penalty
adaptation.

Each round linearizes about the last accepted iterate, solves the penalized
convex subproblem, and accepts or rejects the candidate: a candidate that
leaves the trust region is rejected and the penalty weight escalates; an
accepted candidate adapts the trust region based on the model-accuracy
ratio and resets the penalty weight once the nonlinear constraints are met.
The run fails when the penalty weight exceeds its cap.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import SolverSettings, SolverStatus, solve as conic_solve
from .convexify import PenaltyState, accuracy_ratio, build_subproblem
from .ocp import (
    ProblemParameters,
    Trajectory,
    cost,
    evaluate_feasibility,
    straight_line_initialization,
)
from . import kvfile


@dataclass
class GustoConfig:
    """Outer-loop parameters; the inequality requirements are validated."""

    delta0: float = 10.0
    omega0: float = 1.0
    omega_max: float = 1e6
    epsilon: float = 1e-4
    beta_fail: float = 0.5
    beta_succ: float = 2.0
    rho0: float = 0.1
    rho1: float = 0.9
    gamma_fail: float = 5.0
    max_outer_iters: int = 50
    convergence_tol_x: float = 0.02

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError("delta0 must be > 0")
        if not (self.omega_max > self.omega0 >= 1.0):
            raise ValueError("need omega_max > omega0 >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0.0 < self.beta_fail < 1.0:
            raise ValueError("need 0 < beta_fail < 1")
        if not self.beta_succ > 1.0:
            raise ValueError("need beta_succ > 1")
        if not 0.0 < self.rho0 < self.rho1 < 1.0:
            raise ValueError("need 0 < rho0 < rho1 < 1")
        if not self.gamma_fail > 1.0:
            raise ValueError("need gamma_fail > 1")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


class GustoStatus(Enum):
    CONVERGED = "converged"
    FAILURE = "failure"
    MAX_OUTER = "max_outer"


@dataclass
class RoundTrace:
    delta: float
    omega: float
    rho: float | None
    accepted: bool
    inner_iterations: int
    step_norm: float
    gbar: float | None


@dataclass
class GustoReport:
    trajectory: Trajectory
    status: GustoStatus
    outer_iterations: int
    accepted_rounds: int
    rejected_rounds: int
    total_inner_iterations: int
    final_cost: float
    final_gbar: float
    trace: list = field(default_factory=list)
    warm: bool = False

    @property
    def converged(self) -> bool:
        return self.status is GustoStatus.CONVERGED


def _stacked_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm((a - b).ravel()))


def solve_ocp(
    params: ProblemParameters,
    init: Trajectory,
    cfg: GustoConfig | None = None,
    solver_settings: SolverSettings | None = None,
) -> GustoReport:
    """Run the SCP loop from the given initialization."""
    cfg = cfg or GustoConfig()
    solver_settings = solver_settings or SolverSettings()
    if init.N != params.N:
        raise ValueError(f"initialization horizon {init.N} does not match N={params.N}")

    ref = init.copy()
    delta = cfg.delta0
    omega = cfg.omega0
    trace: list[RoundTrace] = []
    total_inner = 0
    accepted_rounds = 0
    rejected_rounds = 0
    status = GustoStatus.MAX_OUTER
    final_gbar = evaluate_feasibility(ref, params).max_constraint_violation

    for _ in range(cfg.max_outer_iters):
        pen = PenaltyState(omega=omega, delta=delta)
        sub = build_subproblem(ref, params, pen)
        result = conic_solve(sub.program, solver_settings)
        total_inner += result.iterations

        if result.status is not SolverStatus.SOLVED:
            # unsolved subproblem: treat as a rejected round, escalate omega
            rejected_rounds += 1
            omega = cfg.gamma_fail * omega
            trace.append(
                RoundTrace(delta, pen.omega, None, False, result.iterations, np.inf, None)
            )
            if omega > cfg.omega_max:
                status = GustoStatus.FAILURE
                break
            continue

        candidate = sub.extract_trajectory(result.x)
        step2 = _stacked_norm(candidate.states, ref.states)

        if step2 > delta:
            rejected_rounds += 1
            omega = cfg.gamma_fail * omega
            trace.append(
                RoundTrace(delta, pen.omega, None, False, result.iterations, step2, None)
            )
            if omega > cfg.omega_max:
                status = GustoStatus.FAILURE
                break
            continue

        model_obj = sub.model_cost(candidate)
        rho_k = accuracy_ratio(candidate, model_obj, params, pen, ref)

        if rho_k > cfg.rho1:
            rejected_rounds += 1
            delta = cfg.beta_fail * delta
            trace.append(
                RoundTrace(pen.delta, omega, rho_k, False, result.iterations, step2, None)
            )
            continue

        accepted_rounds += 1
        report_fz = evaluate_feasibility(candidate, params)
        gbar = report_fz.max_constraint_violation
        step_inf = float(np.max(np.abs(candidate.states - ref.states)))
        if rho_k < cfg.rho0:
            delta = min(cfg.beta_succ * delta, cfg.delta0)
        omega = cfg.omega0 if gbar <= cfg.epsilon else cfg.gamma_fail * omega
        trace.append(
            RoundTrace(pen.delta, pen.omega, rho_k, True, result.iterations, step2, gbar)
        )

        ref = candidate
        final_gbar = gbar
        if step_inf <= cfg.convergence_tol_x and gbar <= cfg.epsilon:
            status = GustoStatus.CONVERGED
            break
        if omega > cfg.omega_max:
            status = GustoStatus.FAILURE
            break

    return GustoReport(
        trajectory=ref,
        status=status,
        outer_iterations=len(trace),
        accepted_rounds=accepted_rounds,
        rejected_rounds=rejected_rounds,
        total_inner_iterations=total_inner,
        final_cost=cost(ref, params),
        final_gbar=final_gbar,
        trace=trace,
    )


def solve_cold(
    params: ProblemParameters,
    cfg: GustoConfig | None = None,
    solver_settings: SolverSettings | None = None,
) -> GustoReport:
    """SCP from the straight-line/slerp initialization."""
    return solve_ocp(params, straight_line_initialization(params), cfg, solver_settings)


def solve_warm(
    params: ProblemParameters,
    model,
    cfg: GustoConfig | None = None,
    solver_settings: SolverSettings | None = None,
) -> GustoReport:
    """SCP from the learned warm-start prediction."""
    from .warmstart import predict_trajectory

    init = predict_trajectory(model, params)
    report = solve_ocp(params, init, cfg, solver_settings)
    report.warm = True
    return report


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_GUSTO_KEYS = {
    "gusto.delta0": ("delta0", float),
    "gusto.omega0": ("omega0", float),
    "gusto.omega_max": ("omega_max", float),
    "gusto.epsilon": ("epsilon", float),
    "gusto.beta_fail": ("beta_fail", float),
    "gusto.beta_succ": ("beta_succ", float),
    "gusto.rho0": ("rho0", float),
    "gusto.rho1": ("rho1", float),
    "gusto.gamma_fail": ("gamma_fail", float),
    "gusto.max_outer_iters": ("max_outer_iters", int),
    "gusto.convergence_tol_x": ("convergence_tol_x", float),
}

_SOLVER_KEYS = {
    "solver.eps_abs": ("eps_abs", float),
    "solver.eps_rel": ("eps_rel", float),
    "solver.max_iter": ("max_iter", int),
    "solver.rho": ("rho", float),
    "solver.sigma": ("sigma", float),
    "solver.alpha_relax": ("alpha_relax", float),
    "solver.rho_eq_scale": ("rho_eq_scale", float),
    "solver.check_interval": ("check_interval", int),
}


def load_config(path) -> tuple[GustoConfig, SolverSettings]:
    """Read gusto.* and solver.* keys from a key=value config file."""
    pairs = kvfile.parse_kv_file(path)
    kvfile.reject_unknown(pairs, set(_GUSTO_KEYS) | set(_SOLVER_KEYS), source=str(path))
    gusto_kwargs = {}
    solver_kwargs = {}
    for key, value in pairs:
        if key in _GUSTO_KEYS:
            name, typ = _GUSTO_KEYS[key]
            gusto_kwargs[name] = typ(kvfile.as_float(key, value))
        else:
            name, typ = _SOLVER_KEYS[key]
            solver_kwargs[name] = typ(kvfile.as_float(key, value))
    return GustoConfig(**gusto_kwargs), SolverSettings(**solver_kwargs)

"""Operator-splitting (ADMM) solver for sparse conic quadratic programs.

Problem form:

    minimize    0.5 x^T P x + q^T x
    subject to  A x in C

where C is an ordered product of segments: Zero (rows pinned to a value),
Box (per-row bounds), Ball (Euclidean ball about a center) and SecondOrder
(t >= ||v|| after adding a constant offset). The ADMM splitting follows
standard operator-splitting QP practice: one sparse LDU factorization of
the KKT matrix [[P + sigma I, A^T], [A, -diag(1/rho)]] is computed per
solve and re-used across iterations, with over-relaxation and per-segment
rho scaling (equalities are weighted 1e3 heavier).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class ConicSolverError(RuntimeError):
    """KKT factorization failure or non-finite iterates."""


@dataclass
class ZeroCone:
    """Rows fixed to a value: A_seg x = value."""

    value: np.ndarray
    rho_hint: float = 1.0

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))

    @property
    def dim(self) -> int:
        return self.value.shape[0]


@dataclass
class BoxCone:
    """Per-row bounds: lower <= A_seg x <= upper (entries may be +-inf)."""

    lower: np.ndarray
    upper: np.ndarray
    rho_hint: float = 1.0

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


@dataclass
class BallCone:
    """Euclidean ball: ||A_seg x - center|| <= radius."""

    center: np.ndarray
    radius: float
    rho_hint: float = 1.0

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.radius < 0:
            raise ValueError("ball radius must be >= 0")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


@dataclass
class SecondOrderCone:
    """(t, v) = A_seg x + offset with t >= ||v||."""

    dim: int
    offset: np.ndarray | None = None
    rho_hint: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("second-order cone needs dim >= 1")
        if self.offset is None:
            self.offset = np.zeros(self.dim)
        self.offset = np.asarray(self.offset, dtype=float)
        if self.offset.shape != (self.dim,):
            raise ValueError("offset shape mismatch")


Cone = ZeroCone | BoxCone | BallCone | SecondOrderCone


def project_cone(cone: Cone, z: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection of z onto the segment's feasible set."""
    z = np.asarray(z, dtype=float)
    if isinstance(cone, ZeroCone):
        return cone.value.copy()
    if isinstance(cone, BoxCone):
        return np.clip(z, cone.lower, cone.upper)
    if isinstance(cone, BallCone):
        d = z - cone.center
        n = np.linalg.norm(d)
        if n <= cone.radius:
            return z.copy()
        return cone.center + d * (cone.radius / n)
    if isinstance(cone, SecondOrderCone):
        w = z + cone.offset
        t, v = w[0], w[1:]
        nv = np.linalg.norm(v)
        if nv <= t:
            out = w
        elif nv <= -t:
            out = np.zeros_like(w)
        else:
            s = 0.5 * (t + nv)
            out = np.concatenate([[s], v * (s / nv)])
        return out - cone.offset
    raise TypeError(f"unknown cone type {type(cone)!r}")


@dataclass
class ConicProgram:
    P: sp.spmatrix
    q: np.ndarray
    A: sp.spmatrix
    cones: list

    def __post_init__(self):
        self.P = sp.csc_matrix(self.P)
        self.A = sp.csc_matrix(self.A)
        self.q = np.asarray(self.q, dtype=float)
        n = self.q.shape[0]
        if self.P.shape != (n, n):
            raise ValueError("P shape inconsistent with q")
        if self.P.nnz and abs(self.P - self.P.T).max() > 1e-10:
            raise ValueError("P must be symmetric")
        total = sum(c.dim for c in self.cones)
        if self.A.shape != (total, n):
            raise ValueError(
                f"A shape {self.A.shape} inconsistent with cones ({total} rows) and n={n}"
            )

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


class SolverStatus(enum.Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE_GUESS = "primal_infeasible_guess"


@dataclass
class SolverSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 20000
    rho: float = 1.0
    sigma: float = 1e-6
    alpha_relax: float = 1.6
    rho_eq_scale: float = 1e3
    check_interval: int = 5
    scaling_iters: int = 10


@dataclass
class SolverResult:
    x: np.ndarray
    y: np.ndarray
    objective: float
    status: SolverStatus
    iterations: int
    primal_residual: float
    dual_residual: float


class _ProjectionPlan:
    """Segment projections grouped by type/size so each ADMM iteration is a
    handful of vectorized operations."""

    def __init__(self, cones):
        zero_idx, zero_val = [], []
        box_idx, box_lo, box_hi = [], [], []
        balls: dict[int, list] = {}
        socs: dict[int, list] = {}
        offset = 0
        for cone in cones:
            idx = np.arange(offset, offset + cone.dim)
            if isinstance(cone, ZeroCone):
                zero_idx.append(idx)
                zero_val.append(cone.value)
            elif isinstance(cone, BoxCone):
                box_idx.append(idx)
                box_lo.append(cone.lower)
                box_hi.append(cone.upper)
            elif isinstance(cone, BallCone):
                balls.setdefault(cone.dim, []).append((idx, cone.center, cone.radius))
            elif isinstance(cone, SecondOrderCone):
                socs.setdefault(cone.dim, []).append((idx, cone.offset))
            else:
                raise TypeError(f"unknown cone type {type(cone)!r}")
            offset += cone.dim

        self.zero_idx = np.concatenate(zero_idx) if zero_idx else np.empty(0, dtype=int)
        self.zero_val = np.concatenate(zero_val) if zero_val else np.empty(0)
        self.box_idx = np.concatenate(box_idx) if box_idx else np.empty(0, dtype=int)
        self.box_lo = np.concatenate(box_lo) if box_lo else np.empty(0)
        self.box_hi = np.concatenate(box_hi) if box_hi else np.empty(0)
        self.ball_groups = [
            (
                np.stack([g[0] for g in group]),
                np.stack([g[1] for g in group]),
                np.array([g[2] for g in group]),
            )
            for group in balls.values()
        ]
        self.soc_groups = [
            (np.stack([g[0] for g in group]), np.stack([g[1] for g in group]))
            for group in socs.values()
        ]

    def project(self, z: np.ndarray) -> np.ndarray:
        out = z.copy()
        if self.zero_idx.size:
            out[self.zero_idx] = self.zero_val
        if self.box_idx.size:
            out[self.box_idx] = np.clip(z[self.box_idx], self.box_lo, self.box_hi)
        for idx, centers, radii in self.ball_groups:
            d = z[idx] - centers
            n = np.linalg.norm(d, axis=1)
            scale = np.ones_like(n)
            over = n > radii
            scale[over] = radii[over] / n[over]
            out[idx] = centers + d * scale[:, None]
        for idx, offsets in self.soc_groups:
            w = z[idx] + offsets
            t = w[:, 0]
            v = w[:, 1:]
            nv = np.linalg.norm(v, axis=1)
            proj = w.copy()
            polar = nv <= -t
            proj[polar] = 0.0
            boundary = ~polar & (nv > t)
            if np.any(boundary):
                s = 0.5 * (t[boundary] + nv[boundary])
                proj[boundary, 0] = s
                proj[boundary, 1:] = v[boundary] * (s / nv[boundary])[:, None]
            out[idx] = proj - offsets
        return out


def _scale_cone(cone: Cone, e: np.ndarray) -> Cone:
    """Image of the segment set under the (segment-uniform for ball/SOC)
    diagonal row scaling e."""
    if isinstance(cone, ZeroCone):
        return ZeroCone(cone.value * e, cone.rho_hint)
    if isinstance(cone, BoxCone):
        return BoxCone(cone.lower * e, cone.upper * e, cone.rho_hint)
    if isinstance(cone, BallCone):
        return BallCone(cone.center * e, cone.radius * float(e[0]), cone.rho_hint)
    if isinstance(cone, SecondOrderCone):
        return SecondOrderCone(cone.dim, cone.offset * e, cone.rho_hint)
    raise TypeError(f"unknown cone type {type(cone)!r}")


def _segment_slices(cones):
    out = []
    offset = 0
    for cone in cones:
        out.append((cone, slice(offset, offset + cone.dim)))
        offset += cone.dim
    return out


def _ruiz_equilibrate(P, q, A, cones, n_iters: int):
    """Modified Ruiz scaling: diagonal column scaling D, per-row scaling E
    (uniform within ball/SOC segments so projections stay closed-form) and
    a scalar cost scaling c. Returns scaled data plus (D, E, c)."""
    n, m = P.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    c = 1.0
    segments = _segment_slices(cones)

    P_s = P.copy()
    A_s = A.copy()
    q_s = q.copy()
    for _ in range(n_iters):
        abs_A = abs(A_s)
        abs_P = abs(P_s)
        row_max = np.asarray(abs_A.max(axis=1).todense()).ravel() if m else np.empty(0)
        col_max_A = np.asarray(abs_A.max(axis=0).todense()).ravel()
        col_max_P = np.asarray(abs_P.max(axis=0).todense()).ravel() if P_s.nnz else np.zeros(n)
        col_max = np.maximum(col_max_A, col_max_P)

        for cone, slc in segments:
            if not isinstance(cone, (BallCone, SecondOrderCone)):
                continue
            row_max[slc] = row_max[slc].max() if cone.dim else 0.0

        de = np.where(row_max > 1e-8, 1.0 / np.sqrt(row_max), 1.0)
        dd = np.where(col_max > 1e-8, 1.0 / np.sqrt(col_max), 1.0)
        E *= de
        D *= dd
        A_s = sp.diags(de) @ A_s @ sp.diags(dd) if m else A_s
        P_s = sp.diags(dd) @ P_s @ sp.diags(dd)
        q_s = q_s * dd

        # cost scaling keeps the objective at unit magnitude
        if P_s.nnz:
            cost_norm = float(np.mean(np.asarray(abs(P_s).max(axis=0).todense()).ravel()))
        else:
            cost_norm = 0.0
        gamma = max(cost_norm, float(np.linalg.norm(q_s, np.inf)))
        gamma = 1.0 / gamma if gamma > 1e-8 else 1.0
        c *= gamma
        P_s = P_s * gamma
        q_s = q_s * gamma

    scaled_cones = []
    for cone, slc in segments:
        scaled_cones.append(_scale_cone(cone, E[slc]))
    return sp.csc_matrix(P_s), q_s, sp.csc_matrix(A_s), scaled_cones, D, E, c


def _rho_vector(cones, settings: SolverSettings) -> np.ndarray:
    # near-equality segments (tight boxes/balls) take the equality weight,
    # otherwise their loose duals unwind at rate rho * gap
    rho = np.empty(sum(c.dim for c in cones))
    offset = 0
    for cone in cones:
        tight = isinstance(cone, ZeroCone)
        if isinstance(cone, BoxCone) and np.all(cone.upper - cone.lower <= 1e-3):
            tight = True
        if isinstance(cone, BallCone) and cone.radius <= 1e-2:
            tight = True
        val = settings.rho * settings.rho_eq_scale if tight else settings.rho
        rho[offset : offset + cone.dim] = val * cone.rho_hint
        offset += cone.dim
    return rho


def solve(prog: ConicProgram, settings: SolverSettings | None = None, warm=None) -> SolverResult:
    """Run ADMM to the requested residual tolerances.

    warm is an optional (x, y) pair, e.g. a previous solution. Returns the
    best iterate with MAX_ITER status if tolerances are not met; a large,
    stagnant primal residual is flagged PRIMAL_INFEASIBLE_GUESS (the
    penalty formulation upstream keeps intended subproblems feasible, so
    that status indicates a modeling problem).
    """
    settings = settings or SolverSettings()
    n, m = prog.n, prog.m
    P, q, A = prog.P, prog.q, prog.A

    if m == 0:
        try:
            lu0 = spla.splu(sp.csc_matrix(P + settings.sigma * sp.eye(n)))
        except RuntimeError as exc:
            raise ConicSolverError(f"KKT factorization failed: {exc}") from exc
        x = lu0.solve(-q)
        x += lu0.solve(-(P @ x + q))  # one refinement pass undoes the sigma shift
        r_dual = float(np.linalg.norm(P @ x + q, np.inf))
        return SolverResult(
            x=x,
            y=np.empty(0),
            objective=prog.objective(x),
            status=SolverStatus.SOLVED,
            iterations=1,
            primal_residual=0.0,
            dual_residual=r_dual,
        )

    if settings.scaling_iters > 0:
        Ps, qs, As, cones_s, D, E, c = _ruiz_equilibrate(
            P, q, A, prog.cones, settings.scaling_iters
        )
    else:
        Ps, qs, As, cones_s = P, q, A, prog.cones
        D, E, c = np.ones(n), np.ones(m), 1.0

    plan = _ProjectionPlan(cones_s)
    rho = _rho_vector(prog.cones, settings)
    rho_inv = 1.0 / rho

    kkt = sp.bmat(
        [[Ps + settings.sigma * sp.eye(n), As.T], [As, -sp.diags(rho_inv)]], format="csc"
    )
    try:
        lu = spla.splu(kkt)
    except RuntimeError as exc:
        raise ConicSolverError(f"KKT factorization failed: {exc}") from exc

    if warm is not None:
        x0 = np.asarray(warm[0], dtype=float)
        y0 = np.asarray(warm[1], dtype=float)
        if x0.shape != (n,) or y0.shape != (m,):
            raise ConicSolverError("warm start dimensions do not match program")
        x = x0 / D
        y = c * y0 / E
        z = plan.project(As @ x)
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = np.zeros(m)

    alpha = settings.alpha_relax
    rhs = np.empty(n + m)
    r_prim = r_dual = np.inf
    eps_prim = eps_dual = 0.0
    q_inf = float(np.linalg.norm(q, np.inf))
    cD_inv = 1.0 / (c * D)
    E_inv = 1.0 / E
    iterations = settings.max_iter

    for k in range(1, settings.max_iter + 1):
        rhs[:n] = settings.sigma * x - qs
        rhs[n:] = z - rho_inv * y
        sol = lu.solve(rhs)
        x_tilde = sol[:n]
        z_tilde = z + rho_inv * (sol[n:] - y)

        x = alpha * x_tilde + (1.0 - alpha) * x
        w = alpha * z_tilde + (1.0 - alpha) * z
        z = plan.project(w + rho_inv * y)
        y = y + rho * (w - z)

        if k % settings.check_interval == 0 or k == settings.max_iter:
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise ConicSolverError("solver iterates became non-finite")
            # residuals and tolerances in unscaled units
            Ax = (As @ x) * E_inv
            z_u = z * E_inv
            Px = (Ps @ x) * cD_inv
            Aty = (As.T @ y) * cD_inv
            r_prim = float(np.linalg.norm(Ax - z_u, np.inf)) if m else 0.0
            r_dual = float(np.linalg.norm(Px + q + Aty, np.inf))
            eps_prim = settings.eps_abs + settings.eps_rel * max(
                np.linalg.norm(Ax, np.inf), np.linalg.norm(z_u, np.inf)
            )
            eps_dual = settings.eps_abs + settings.eps_rel * max(
                np.linalg.norm(Px, np.inf), np.linalg.norm(Aty, np.inf), q_inf
            )
            if r_prim <= eps_prim and r_dual <= eps_dual:
                iterations = k
                break
    else:
        iterations = settings.max_iter

    if r_prim <= eps_prim and r_dual <= eps_dual:
        status = SolverStatus.SOLVED
    elif r_prim > max(1e3 * eps_prim, 1e-3) and r_prim > 1e2 * r_dual:
        status = SolverStatus.PRIMAL_INFEASIBLE_GUESS
    else:
        status = SolverStatus.MAX_ITER

    x_out = D * x
    y_out = E * y / c
    return SolverResult(
        x=x_out,
        y=y_out,
        objective=prog.objective(x_out),
        status=status,
        iterations=iterations,
        primal_residual=r_prim,
        dual_residual=r_dual,
    )

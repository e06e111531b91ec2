"""Learned warm starts: problem sampling, dataset generation, cubic
trajectory encoding, a from-scratch MLP trained with SGD, and decoding of
predictions into solver initializations.

The problem encoding is a 20-vector: start pose (r, q), goal pose (r, q),
then the obstacle descriptor (center, half extents), all in
workspace-local meters; an absent obstacle is the all-zero 6-vector.
Trajectories are encoded per dimension as cubic polynomials in normalized
time tau = t / T, giving (13 + 6) * 4 = 76 coefficients.
"""

from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .dynamics import FreeFlyerState
from .geometry import ObstacleBox, signed_distance
from .gusto import GustoConfig, solve_cold
from .conic import SolverSettings
from .ocp import ProblemParameters, Trajectory, Workspace

ENCODING_DIM = 20
TARGET_DIM = 76
POLY_ORDER = 3
MLP_DIMS = (20, 256, 512, 256, 76)

ENV_GRANITE = "granite"
ENV_JEM = "jem"
_ENV_CODES = {ENV_GRANITE: 0.0, ENV_JEM: 1.0}
_ENV_NAMES = {0.0: ENV_GRANITE, 1.0: ENV_JEM}

GRANITE_WORKSPACE = Workspace(np.array([-1.0, -1.0, 0.0]), np.array([1.0, 1.0, 0.0]))
JEM_WORKSPACE = Workspace(np.array([-0.75, -3.2, -0.85]), np.array([0.75, 3.2, 0.85]))

# training-distribution obstacle geometry
OBSTACLE_HALF_RANGE = (0.05, 0.4)
OBSTACLE_CENTER_RADIUS = 1.0
_CLEARANCE_MARGIN = 0.02
_RESAMPLE_CAP = 1000

DEFAULT_N_STEPS = 40
_MIN_HORIZON = 10.0


class SamplingError(RuntimeError):
    """Could not find a feasible obstacle placement."""


class EncodingError(ValueError):
    """Problem does not fit the fixed-size learner encoding."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


def workspace_for(env: str) -> Workspace:
    if env == ENV_GRANITE:
        return GRANITE_WORKSPACE
    if env == ENV_JEM:
        return JEM_WORKSPACE
    raise ValueError(f"unknown environment {env!r}")


def uniform_quaternion(rng) -> np.ndarray:
    """Uniform unit quaternion over SO(3) (subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return np.array(
        [
            a * np.sin(2.0 * np.pi * u2),
            a * np.cos(2.0 * np.pi * u2),
            b * np.sin(2.0 * np.pi * u3),
            b * np.cos(2.0 * np.pi * u3),
        ]
    )


def yaw_quaternion(theta: float) -> np.ndarray:
    return np.array([0.0, 0.0, np.sin(0.5 * theta), np.cos(0.5 * theta)])


def _uniform_in_ball(rng, dim: int) -> np.ndarray:
    while True:
        p = rng.uniform(-1.0, 1.0, size=dim)
        if np.linalg.norm(p) <= 1.0:
            return p


def derive_horizon(r0, q0, r1, q1, vehicle, n_steps: int = DEFAULT_N_STEPS):
    """Deterministic horizon from the pose pair: generous time to traverse
    at half the speed limits, fixed step count."""
    dist = float(np.linalg.norm(np.asarray(r1) - np.asarray(r0)))
    angle = dyn.quat_geodesic_angle(q0, q1)
    T = max(2.0 * dist / vehicle.v_max, 2.0 * angle / vehicle.w_max, _MIN_HORIZON)
    return n_steps, T / n_steps


def sample_obstacle(rng, env: str, r_start, r_goal, vehicle, delta_sd: float) -> ObstacleBox:
    """Draw a training-distribution obstacle leaving both endpoints clear."""
    planar = env == ENV_GRANITE
    for _ in range(_RESAMPLE_CAP):
        half = rng.uniform(*OBSTACLE_HALF_RANGE, size=3)
        if planar:
            center = np.concatenate([OBSTACLE_CENTER_RADIUS * _uniform_in_ball(rng, 2), [0.0]])
        else:
            center = OBSTACLE_CENTER_RADIUS * _uniform_in_ball(rng, 3)
        obs = ObstacleBox(center=center, half_extents=half)
        clear = delta_sd + _CLEARANCE_MARGIN
        if (
            signed_distance(r_start, vehicle.radius, obs) >= clear
            and signed_distance(r_goal, vehicle.radius, obs) >= clear
        ):
            return obs
    raise SamplingError(f"no clear obstacle placement found in {_RESAMPLE_CAP} tries")


def sample_problem(
    env: str,
    with_obstacle: bool,
    rng_seed,
    n_steps: int = DEFAULT_N_STEPS,
    vehicle=None,
) -> ProblemParameters:
    """Random problem instance: uniform start/goal poses in the environment,
    zero boundary velocities, optionally one obstacle."""
    rng = np.random.default_rng(rng_seed)
    ws = workspace_for(env)
    vehicle = vehicle or _default_vehicle()

    r_start = rng.uniform(ws.lower, ws.upper)
    r_goal = rng.uniform(ws.lower, ws.upper)
    if env == ENV_GRANITE:
        q_start = yaw_quaternion(rng.uniform(-np.pi, np.pi))
        q_goal = yaw_quaternion(rng.uniform(-np.pi, np.pi))
    else:
        q_start = uniform_quaternion(rng)
        q_goal = uniform_quaternion(rng)

    obstacles = []
    if with_obstacle:
        obstacles.append(
            sample_obstacle(rng, env, r_start, r_goal, vehicle, delta_sd=0.05)
        )

    N, dt = derive_horizon(r_start, q_start, r_goal, q_goal, vehicle, n_steps)
    x_init = FreeFlyerState(r=r_start, v=np.zeros(3), q=q_start, w=np.zeros(3))
    return ProblemParameters(
        x_init=x_init,
        r_goal=r_goal,
        q_goal=q_goal,
        N=N,
        dt=dt,
        obstacles=obstacles,
        vehicle=vehicle,
        workspace=ws,
    )


def _default_vehicle():
    from .dynamics import VehicleParams

    return VehicleParams()


# ---------------------------------------------------------------------------
# encoding and polynomial warm starts
# ---------------------------------------------------------------------------


def encode_problem(params: ProblemParameters) -> np.ndarray:
    """Map a problem to the fixed 20-dim learner input."""
    if len(params.obstacles) > 1:
        raise EncodingError("learner encoding supports at most one obstacle")
    center = params.workspace.center
    enc = np.zeros(ENCODING_DIM)
    enc[0:3] = params.x_init.r - center
    enc[3:7] = dyn.quat_normalize(params.x_init.q)
    enc[7:10] = params.r_goal - center
    enc[10:14] = params.q_goal
    if params.obstacles:
        obs = params.obstacles[0]
        enc[14:17] = obs.center - center
        enc[17:20] = obs.half_extents
    return enc


@dataclass
class PolyWarmStart:
    """Cubic coefficients in normalized time; alpha is 13x4 (states), beta
    6x4 (controls), T the horizon in seconds."""

    alpha: np.ndarray
    beta: np.ndarray
    T: float

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.alpha.shape != (dyn.STATE_DIM, POLY_ORDER + 1):
            raise ValueError("alpha must be 13x4")
        if self.beta.shape != (dyn.CONTROL_DIM, POLY_ORDER + 1):
            raise ValueError("beta must be 6x4")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise ValueError("coefficients must be finite")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha.ravel(), self.beta.ravel()])

    @classmethod
    def from_vector(cls, vec, T: float) -> "PolyWarmStart":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (TARGET_DIM,):
            raise ValueError(f"coefficient vector must have {TARGET_DIM} entries")
        n_a = dyn.STATE_DIM * (POLY_ORDER + 1)
        return cls(
            alpha=vec[:n_a].reshape(dyn.STATE_DIM, POLY_ORDER + 1),
            beta=vec[n_a:].reshape(dyn.CONTROL_DIM, POLY_ORDER + 1),
            T=T,
        )


def _vandermonde(tau: np.ndarray) -> np.ndarray:
    return np.vander(tau, POLY_ORDER + 1, increasing=True)


def fit_polynomials(traj: Trajectory) -> PolyWarmStart:
    """Least-squares cubic fit of every state/control dimension over
    normalized time."""
    N = traj.N
    if N < 4:
        raise ValueError("cubic fit needs N >= 4")
    V_s = _vandermonde(np.arange(N + 1) / N)
    V_u = _vandermonde(np.arange(N) / (N - 1))
    alpha, *_ = np.linalg.lstsq(V_s, traj.states, rcond=None)
    beta, *_ = np.linalg.lstsq(V_u, traj.controls, rcond=None)
    return PolyWarmStart(alpha=alpha.T, beta=beta.T, T=N * traj.dt)


def decode_warm_start(pw: PolyWarmStart, params: ProblemParameters) -> Trajectory:
    """Evaluate the polynomials on the problem's grid and repair the result:
    unit quaternions (identity fallback), controls clamped into the actuator
    balls, exact initial state."""
    N = params.N
    states = _vandermonde(np.arange(N + 1) / N) @ pw.alpha.T
    controls = _vandermonde(np.arange(N) / (N - 1)) @ pw.beta.T

    q = states[:, dyn.Q_SLC]
    norms = np.linalg.norm(q, axis=1)
    bad = norms < 1e-6
    q[bad] = dyn.IDENTITY_QUAT
    norms[bad] = 1.0
    states[:, dyn.Q_SLC] = q / norms[:, None]

    for slc, cap in ((dyn.F_SLC, params.vehicle.F_max), (dyn.M_SLC, params.vehicle.M_max)):
        block = controls[:, slc]
        mag = np.linalg.norm(block, axis=1)
        over = mag > cap
        if np.any(over):
            block[over] *= (cap / mag[over])[:, None]
        controls[:, slc] = block

    states[0] = params.x_init.to_vector()
    return Trajectory(states=states, controls=controls, dt=params.dt)


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


@dataclass
class MlpModel:
    """Fully connected ReLU network plus the standardization statistics of
    its training data."""

    dims: tuple
    weights: list
    biases: list
    mu_in: np.ndarray
    sig_in: np.ndarray
    mu_out: np.ndarray
    sig_out: np.ndarray
    epochs: int = 0
    final_loss: float = np.nan
    seed: int = 0
    loss_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i + 1], self.dims[i]) or b.shape != (self.dims[i + 1],):
                raise ValueError(f"layer {i} shapes inconsistent with dims {self.dims}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} parameters must be finite")


def init_mlp(dims, seed: int) -> MlpModel:
    """Uniform +-1/sqrt(fan_in) initialization."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    d_in, d_out = dims[0], dims[-1]
    return MlpModel(
        dims=tuple(dims),
        weights=weights,
        biases=biases,
        mu_in=np.zeros(d_in),
        sig_in=np.ones(d_in),
        mu_out=np.zeros(d_out),
        sig_out=np.ones(d_out),
        seed=seed,
    )


def forward(model: MlpModel, enc: np.ndarray) -> np.ndarray:
    """Raw network output (no standardization): affine -> ReLU x3 -> affine."""
    a = np.asarray(enc, dtype=float)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ W.T + b, 0.0)
    a = a @ model.weights[-1].T + model.biases[-1]
    return a[0] if single else a


def mlp_loss_and_gradients(weights, biases, X, Y):
    """MSE loss and its gradients; shared by training and the
    finite-difference checks."""
    acts = [np.asarray(X, dtype=float)]
    for W, b in zip(weights[:-1], biases[:-1]):
        acts.append(np.maximum(acts[-1] @ W.T + b, 0.0))
    out = acts[-1] @ weights[-1].T + biases[-1]
    err = out - Y
    loss = float(np.mean(err**2))

    grad = 2.0 * err / err.size
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = grad.T @ acts[layer]
        grads_b[layer] = grad.sum(axis=0)
        if layer > 0:
            grad = (grad @ weights[layer]) * (acts[layer] > 0.0)
    return loss, grads_w, grads_b


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0


def train(dataset, hyper: TrainConfig | None = None) -> MlpModel:
    """Mini-batch SGD on the standardized problem-to-coefficients mapping.

    The learning rate halves whenever the full-dataset loss fails to
    improve after an epoch (the epoch is rolled back), so the recorded
    loss trace is non-increasing.
    """
    hyper = hyper or TrainConfig()
    X = np.stack([rec.encoding for rec in dataset])
    Y = np.stack([rec.target.to_vector() for rec in dataset])
    n = X.shape[0]
    if hyper.batch_size >= n:
        raise ValueError(f"batch size {hyper.batch_size} must be < dataset size {n}")

    mu_in, sig_in = X.mean(axis=0), X.std(axis=0)
    mu_out, sig_out = Y.mean(axis=0), Y.std(axis=0)
    sig_in = np.where(sig_in < 1e-8, 1.0, sig_in)
    sig_out = np.where(sig_out < 1e-8, 1.0, sig_out)
    Xs = (X - mu_in) / sig_in
    Ys = (Y - mu_out) / sig_out

    model = init_mlp(MLP_DIMS, hyper.seed)
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]

    rng = np.random.default_rng(hyper.seed)
    lr = hyper.learning_rate

    def full_loss(ws, bs):
        loss, _, _ = mlp_loss_and_gradients(ws, bs, Xs, Ys)
        return loss

    best_w = [w.copy() for w in weights]
    best_b = [b.copy() for b in biases]
    best_loss = full_loss(weights, biases)
    trace = [best_loss]

    for _ in range(hyper.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = perm[start : start + hyper.batch_size]
            loss, gw, gb = mlp_loss_and_gradients(weights, biases, Xs[idx], Ys[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite batch loss at lr={lr:g}; reduce the learning rate"
                )
            for i in range(len(weights)):
                weights[i] -= lr * gw[i]
                biases[i] -= lr * gb[i]
        loss = full_loss(weights, biases)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite epoch loss at lr={lr:g}")
        if loss > best_loss:
            weights = [w.copy() for w in best_w]
            biases = [b.copy() for b in best_b]
            lr *= 0.5
        else:
            best_loss = loss
            best_w = [w.copy() for w in weights]
            best_b = [b.copy() for b in biases]
        trace.append(best_loss)

    return MlpModel(
        dims=MLP_DIMS,
        weights=best_w,
        biases=best_b,
        mu_in=mu_in,
        sig_in=sig_in,
        mu_out=mu_out,
        sig_out=sig_out,
        epochs=hyper.epochs,
        final_loss=best_loss,
        seed=hyper.seed,
        loss_trace=trace,
    )


def predict_coefficients(model: MlpModel, params: ProblemParameters) -> PolyWarmStart:
    enc = encode_problem(params)
    if enc.shape[0] != model.dims[0]:
        raise EncodingError(
            f"model expects {model.dims[0]} inputs, encoding has {enc.shape[0]}"
        )
    z = (enc - model.mu_in) / model.sig_in
    out = forward(model, z) * model.sig_out + model.mu_out
    return PolyWarmStart.from_vector(out, T=params.horizon)


def predict_trajectory(model: MlpModel, params: ProblemParameters) -> Trajectory:
    """Learned warm start for a new problem instance."""
    return decode_warm_start(predict_coefficients(model, params), params)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------


@dataclass
class DatasetRecord:
    encoding: np.ndarray
    target: PolyWarmStart
    env: str
    cost: float
    iterations: int


@dataclass
class GenerationStats:
    requested: int
    converged: int
    failed: int

    @property
    def failure_rate(self) -> float:
        return self.failed / max(self.requested, 1)


def _gen_worker(args):
    (i, seed, env_mix, obstacle_fraction, cfg, solver_settings, n_steps) = args
    pick = np.random.default_rng(np.random.SeedSequence([seed, i, 0]))
    env = ENV_JEM if pick.random() < env_mix else ENV_GRANITE
    with_obstacle = pick.random() < obstacle_fraction
    try:
        params = sample_problem(
            env, with_obstacle, np.random.SeedSequence([seed, i, 1]), n_steps=n_steps
        )
        report = solve_cold(params, cfg, solver_settings)
    except SamplingError:
        return i, None
    if not report.converged:
        return i, None
    record = DatasetRecord(
        encoding=encode_problem(params),
        target=fit_polynomials(report.trajectory),
        env=env,
        cost=report.final_cost,
        iterations=report.total_inner_iterations,
    )
    return i, record


def generate_dataset(
    count: int,
    env_mix: float = 11.0 / 13.0,
    cfg: GustoConfig | None = None,
    solver_settings: SolverSettings | None = None,
    jobs: int = 1,
    obstacle_fraction: float = 0.5,
    seed: int = 0,
    n_steps: int = DEFAULT_N_STEPS,
    progress=None,
):
    """Sample problems, solve them cold, and keep polynomial-encoded records
    of the converged ones. Deterministic for a fixed seed regardless of the
    parallelism degree."""
    if count < 1:
        raise ValueError("count must be >= 1")
    cfg = cfg or GustoConfig()
    solver_settings = solver_settings or SolverSettings()
    tasks = [
        (i, seed, env_mix, obstacle_fraction, cfg, solver_settings, n_steps)
        for i in range(count)
    ]
    results = {}
    if jobs <= 1:
        for task in tasks:
            i, rec = _gen_worker(task)
            results[i] = rec
            if progress:
                progress(len(results), count)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, rec in pool.map(_gen_worker, tasks, chunksize=4):
                results[i] = rec
                if progress:
                    progress(len(results), count)
    records = [results[i] for i in range(count) if results[i] is not None]
    stats = GenerationStats(
        requested=count, converged=len(records), failed=count - len(records)
    )
    return records, stats


# ---------------------------------------------------------------------------
# binary file formats
# ---------------------------------------------------------------------------

_FFDS_MAGIC = b"FFDS"
_FFNN_MAGIC = b"FFNN"
_FORMAT_VERSION = 1
_META_DIM = 4  # env code, solver cost, inner iterations, horizon seconds


def save_dataset(records, path) -> None:
    """FFDS: header then per-record little-endian float64 rows."""
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIQIII",
                _FFDS_MAGIC,
                _FORMAT_VERSION,
                len(records),
                ENCODING_DIM,
                TARGET_DIM,
                _META_DIM,
            )
        )
        for rec in records:
            meta = np.array(
                [_ENV_CODES[rec.env], rec.cost, float(rec.iterations), rec.target.T]
            )
            row = np.concatenate([rec.encoding, rec.target.to_vector(), meta])
            fh.write(row.astype("<f8").tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<4sIQIII"))
        magic, version, count, enc_dim, tgt_dim, meta_dim = struct.unpack("<4sIQIII", head)
        if magic != _FFDS_MAGIC:
            raise ValueError(f"{path}: not an FFDS dataset file")
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported FFDS version {version}")
        if (enc_dim, tgt_dim, meta_dim) != (ENCODING_DIM, TARGET_DIM, _META_DIM):
            raise ValueError(f"{path}: unexpected FFDS dimensions")
        row_len = enc_dim + tgt_dim + meta_dim
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != count * row_len:
        raise ValueError(f"{path}: truncated FFDS payload")
    data = data.reshape(count, row_len)
    records = []
    for row in data:
        meta = row[enc_dim + tgt_dim :]
        records.append(
            DatasetRecord(
                encoding=row[:enc_dim].copy(),
                target=PolyWarmStart.from_vector(
                    row[enc_dim : enc_dim + tgt_dim], T=float(meta[3])
                ),
                env=_ENV_NAMES.get(float(meta[0]), ENV_JEM),
                cost=float(meta[1]),
                iterations=int(meta[2]),
            )
        )
    return records


def save_model(model: MlpModel, path) -> None:
    """FFNN: header with layer dims, then standardization vectors and
    row-major layer parameters, little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _FFNN_MAGIC, _FORMAT_VERSION, len(model.dims)))
        fh.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
        fh.write(
            np.array([float(model.epochs), model.final_loss, float(model.seed)])
            .astype("<f8")
            .tobytes()
        )
        for arr in (model.mu_in, model.sig_in, model.mu_out, model.sig_out):
            fh.write(np.asarray(arr).astype("<f8").tobytes())
        for W, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(W).astype("<f8").tobytes())
            fh.write(np.asarray(b).astype("<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        magic, version, n_dims = struct.unpack("<4sII", fh.read(12))
        if magic != _FFNN_MAGIC:
            raise ValueError(f"{path}: not an FFNN model file")
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported FFNN version {version}")
        dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        meta = np.frombuffer(fh.read(3 * 8), dtype="<f8")

        def read_vec(n):
            return np.frombuffer(fh.read(8 * n), dtype="<f8").copy()

        mu_in = read_vec(dims[0])
        sig_in = read_vec(dims[0])
        mu_out = read_vec(dims[-1])
        sig_out = read_vec(dims[-1])
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(read_vec(fan_in * fan_out).reshape(fan_out, fan_in))
            biases.append(read_vec(fan_out))
    return MlpModel(
        dims=dims,
        weights=weights,
        biases=biases,
        mu_in=mu_in,
        sig_in=sig_in,
        mu_out=mu_out,
        sig_out=sig_out,
        epochs=int(meta[0]),
        final_loss=float(meta[1]),
        seed=int(meta[2]),
    )

"""Paired cold/warm benchmark across the four trajectory categories, with
CSV and figure reporting.

Categories: TransOnly (goal attitude equals start attitude, no obstacle),
TransRot (random attitudes, no obstacle), ObsSeen (one obstacle from the
training distribution) and ObsOOD (one obstacle outside it: oversized half
extents or placed beyond the training radius).
"""

from __future__ import annotations

import csv
import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kvfile
from . import warmstart as ws
from .conic import SolverSettings
from .gusto import GustoConfig, GustoReport, solve_cold, solve_warm
from .ocp import ProblemParameters

CATEGORIES = ("TransOnly", "TransRot", "ObsSeen", "ObsOOD")

OOD_HALF_RANGE = (0.45, 0.7)
OOD_CENTER_RANGE = (1.0, 1.5)


@dataclass
class BenchmarkInstance:
    instance_id: str
    category: str
    seed: int
    params: ProblemParameters


@dataclass
class BenchmarkSuite:
    instances: list
    repetitions: int = 1


@dataclass
class BenchmarkRow:
    instance_id: str
    category: str
    problem_hash: str
    cold_cost: float
    cold_inner: int
    cold_outer: int
    cold_converged: bool
    cold_time: float
    warm_cost: float
    warm_inner: int
    warm_outer: int
    warm_converged: bool
    warm_time: float

    @property
    def reduction(self) -> float:
        if self.cold_inner == 0:
            return 0.0
        return (self.cold_inner - self.warm_inner) / self.cold_inner


def problem_hash(params: ProblemParameters) -> str:
    h = hashlib.sha256()
    parts = [
        params.x_init.to_vector(),
        params.r_goal,
        params.q_goal,
        np.array([params.N, params.dt, params.delta_goal, params.delta_sd, params.delta_att]),
        params.R.ravel(),
        np.array(
            [
                params.vehicle.m,
                params.vehicle.radius,
                params.vehicle.v_max,
                params.vehicle.w_max,
                params.vehicle.F_max,
                params.vehicle.M_max,
            ]
        ),
        params.vehicle.J.ravel(),
    ]
    for obs in params.obstacles:
        parts.extend([obs.center, obs.half_extents])
    for part in parts:
        h.update(np.asarray(part, dtype=float).tobytes())
    return h.hexdigest()[:16]


def _sample_ood_obstacle(rng, env, r_start, r_goal, vehicle, delta_sd):
    planar = env == ws.ENV_GRANITE
    dim = 2 if planar else 3
    for _ in range(1000):
        if rng.random() < 0.5:
            half = rng.uniform(*OOD_HALF_RANGE, size=3)
            center = ws.OBSTACLE_CENTER_RADIUS * ws._uniform_in_ball(rng, dim)
        else:
            half = rng.uniform(*ws.OBSTACLE_HALF_RANGE, size=3)
            direction = ws._uniform_in_ball(rng, dim)
            nrm = np.linalg.norm(direction)
            if nrm < 1e-9:
                continue
            center = direction / nrm * rng.uniform(*OOD_CENTER_RANGE)
        if planar:
            center = np.concatenate([center, [0.0]])
        obs = ws.ObstacleBox(center=center, half_extents=half)
        clear = delta_sd + 0.02
        if (
            ws.signed_distance(r_start, vehicle.radius, obs) >= clear
            and ws.signed_distance(r_goal, vehicle.radius, obs) >= clear
        ):
            return obs
    raise ws.SamplingError("no clear out-of-distribution obstacle placement found")


def sample_category_instance(
    category: str, seed_entropy, env: str = ws.ENV_JEM, n_steps: int = ws.DEFAULT_N_STEPS
) -> ProblemParameters:
    """Draw one benchmark problem of the given category."""
    if category == "TransOnly":
        params = ws.sample_problem(env, False, seed_entropy, n_steps=n_steps)
        N, dt = ws.derive_horizon(
            params.x_init.r, params.x_init.q, params.r_goal, params.x_init.q,
            params.vehicle, n_steps,
        )
        return replace(params, q_goal=params.x_init.q.copy(), N=N, dt=dt)
    if category == "TransRot":
        return ws.sample_problem(env, False, seed_entropy, n_steps=n_steps)
    if category == "ObsSeen":
        return ws.sample_problem(env, True, seed_entropy, n_steps=n_steps)
    if category == "ObsOOD":
        params = ws.sample_problem(env, False, seed_entropy, n_steps=n_steps)
        rng = np.random.default_rng(np.random.SeedSequence([*_entropy_list(seed_entropy), 99]))
        obs = _sample_ood_obstacle(
            rng, env, params.x_init.r, params.r_goal, params.vehicle, params.delta_sd
        )
        return replace(params, obstacles=[obs])
    raise ValueError(f"unknown category {category!r}")


def _entropy_list(seed_entropy):
    if isinstance(seed_entropy, np.random.SeedSequence):
        return list(seed_entropy.entropy) if isinstance(seed_entropy.entropy, (list, tuple)) else [seed_entropy.entropy]
    if isinstance(seed_entropy, (list, tuple)):
        return list(seed_entropy)
    return [int(seed_entropy)]


def build_suite(
    categories=CATEGORIES,
    count: int = 15,
    seed: int = 0,
    env: str = ws.ENV_JEM,
    n_steps: int = ws.DEFAULT_N_STEPS,
    repetitions: int = 1,
) -> BenchmarkSuite:
    instances = []
    for c_idx, category in enumerate(categories):
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        for i in range(count):
            params = sample_category_instance(category, [seed, c_idx, i], env, n_steps)
            instances.append(
                BenchmarkInstance(
                    instance_id=f"{category}-{i:04d}",
                    category=category,
                    seed=seed,
                    params=params,
                )
            )
    suite = BenchmarkSuite(instances=instances, repetitions=repetitions)
    validate_suite(suite)
    return suite


def validate_suite(suite: BenchmarkSuite) -> None:
    """Category separation contract."""
    for inst in suite.instances:
        p = inst.params
        if inst.category == "TransOnly":
            if p.obstacles or not np.allclose(p.q_goal, p.x_init.q):
                raise ValueError(f"{inst.instance_id}: TransOnly must keep attitude, no obstacle")
        elif inst.category == "TransRot":
            if p.obstacles:
                raise ValueError(f"{inst.instance_id}: TransRot must have no obstacle")
        elif inst.category in ("ObsSeen", "ObsOOD"):
            if len(p.obstacles) != 1:
                raise ValueError(f"{inst.instance_id}: {inst.category} needs exactly one obstacle")


_SUITE_KEYS = {
    "suite.categories",
    "suite.count",
    "suite.seed",
    "suite.env",
    "suite.n_steps",
    "suite.repetitions",
}


def load_suite(path) -> BenchmarkSuite:
    pairs = kvfile.parse_kv_file(path)
    kvfile.reject_unknown(pairs, _SUITE_KEYS, source=str(path))
    values = dict(pairs)
    kwargs = {}
    if "suite.categories" in values:
        kwargs["categories"] = tuple(
            tok.strip() for tok in values["suite.categories"].split(",") if tok.strip()
        )
    if "suite.count" in values:
        kwargs["count"] = kvfile.as_int("suite.count", values["suite.count"])
    if "suite.seed" in values:
        kwargs["seed"] = kvfile.as_int("suite.seed", values["suite.seed"])
    if "suite.env" in values:
        kwargs["env"] = values["suite.env"]
    if "suite.n_steps" in values:
        kwargs["n_steps"] = kvfile.as_int("suite.n_steps", values["suite.n_steps"])
    if "suite.repetitions" in values:
        kwargs["repetitions"] = kvfile.as_int("suite.repetitions", values["suite.repetitions"])
    return build_suite(**kwargs)


# ---------------------------------------------------------------------------
# paired runs
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _bench_init(model, cfg, solver_settings):
    _WORKER_STATE["model"] = model
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["settings"] = solver_settings


def _run_pair(model, cfg, settings, inst: BenchmarkInstance) -> BenchmarkRow:
    t0 = time.perf_counter()
    cold = solve_cold(inst.params, cfg, settings)
    t1 = time.perf_counter()
    warm = solve_warm(inst.params, model, cfg, settings)
    t2 = time.perf_counter()
    return BenchmarkRow(
        instance_id=inst.instance_id,
        category=inst.category,
        problem_hash=problem_hash(inst.params),
        cold_cost=cold.final_cost,
        cold_inner=cold.total_inner_iterations,
        cold_outer=cold.outer_iterations,
        cold_converged=cold.converged,
        cold_time=t1 - t0,
        warm_cost=warm.final_cost,
        warm_inner=warm.total_inner_iterations,
        warm_outer=warm.outer_iterations,
        warm_converged=warm.converged,
        warm_time=t2 - t1,
    )


def _bench_worker(inst: BenchmarkInstance) -> BenchmarkRow:
    return _run_pair(
        _WORKER_STATE["model"], _WORKER_STATE["cfg"], _WORKER_STATE["settings"], inst
    )


def run_benchmark(
    suite: BenchmarkSuite,
    model,
    cfg: GustoConfig | None = None,
    solver_settings: SolverSettings | None = None,
    jobs: int = 1,
    progress=None,
):
    """Solve every instance cold then warm with identical configuration."""
    cfg = cfg or GustoConfig()
    solver_settings = solver_settings or SolverSettings()
    validate_suite(suite)
    work = [inst for _ in range(suite.repetitions) for inst in suite.instances]

    rows: list[BenchmarkRow] = []
    if jobs <= 1:
        for inst in work:
            rows.append(_run_pair(model, cfg, solver_settings, inst))
            if progress:
                progress(len(rows), len(work))
    else:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_bench_init, initargs=(model, cfg, solver_settings)
        ) as pool:
            for row in pool.map(_bench_worker, work, chunksize=1):
                rows.append(row)
                if progress:
                    progress(len(rows), len(work))
    rows.sort(key=lambda r: r.instance_id)
    return rows, summarize(rows)


# ---------------------------------------------------------------------------
# summaries and reports
# ---------------------------------------------------------------------------


@dataclass
class CategorySummary:
    category: str
    instances: int
    converged_pairs: int
    failures: int
    mean_cost_cold: float
    mean_cost_warm: float
    mean_inner_cold: float
    mean_inner_warm: float
    median_inner_cold: float
    median_inner_warm: float
    std_inner_cold: float
    std_inner_warm: float
    mean_reduction: float
    median_reduction: float
    reduction_ci95: float
    median_cost_rel_diff: float
    mean_time_cold: float
    mean_time_warm: float


def summarize(rows) -> list[CategorySummary]:
    """Per-category aggregates over converged pairs; unconverged runs are
    counted as failures and excluded from cost/iteration statistics."""
    summaries = []
    for category in CATEGORIES:
        cat_rows = [r for r in rows if r.category == category]
        if not cat_rows:
            continue
        pairs = [r for r in cat_rows if r.cold_converged and r.warm_converged]
        failures = len(cat_rows) - len(pairs)
        if pairs:
            cold_inner = np.array([r.cold_inner for r in pairs], dtype=float)
            warm_inner = np.array([r.warm_inner for r in pairs], dtype=float)
            reductions = (cold_inner - warm_inner) / np.maximum(cold_inner, 1.0)
            cost_cold = np.array([r.cold_cost for r in pairs])
            cost_warm = np.array([r.warm_cost for r in pairs])
            rel_diff = np.abs(cost_warm - cost_cold) / np.maximum(cost_cold, 1e-9)
            n = len(pairs)
            sem = float(np.std(reductions, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            summaries.append(
                CategorySummary(
                    category=category,
                    instances=len(cat_rows),
                    converged_pairs=n,
                    failures=failures,
                    mean_cost_cold=float(np.mean(cost_cold)),
                    mean_cost_warm=float(np.mean(cost_warm)),
                    mean_inner_cold=float(np.mean(cold_inner)),
                    mean_inner_warm=float(np.mean(warm_inner)),
                    median_inner_cold=float(np.median(cold_inner)),
                    median_inner_warm=float(np.median(warm_inner)),
                    std_inner_cold=float(np.std(cold_inner, ddof=1)) if n > 1 else 0.0,
                    std_inner_warm=float(np.std(warm_inner, ddof=1)) if n > 1 else 0.0,
                    mean_reduction=float(np.mean(reductions)),
                    median_reduction=float(np.median(reductions)),
                    reduction_ci95=1.96 * sem,
                    median_cost_rel_diff=float(np.median(rel_diff)),
                    mean_time_cold=float(np.mean([r.cold_time for r in pairs])),
                    mean_time_warm=float(np.mean([r.warm_time for r in pairs])),
                )
            )
        else:
            summaries.append(
                CategorySummary(
                    category=category, instances=len(cat_rows), converged_pairs=0,
                    failures=failures, mean_cost_cold=np.nan, mean_cost_warm=np.nan,
                    mean_inner_cold=np.nan, mean_inner_warm=np.nan,
                    median_inner_cold=np.nan, median_inner_warm=np.nan,
                    std_inner_cold=np.nan, std_inner_warm=np.nan,
                    mean_reduction=np.nan, median_reduction=np.nan,
                    reduction_ci95=np.nan, median_cost_rel_diff=np.nan,
                    mean_time_cold=np.nan, mean_time_warm=np.nan,
                )
            )
    return summaries


_CSV_FIELDS = [
    "instance_id",
    "category",
    "problem_hash",
    "cold_cost",
    "cold_inner",
    "cold_outer",
    "cold_converged",
    "warm_cost",
    "warm_inner",
    "warm_outer",
    "warm_converged",
    "reduction",
]
_TIME_FIELDS = ["cold_time", "warm_time"]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_rows_csv(rows, path, include_times: bool = False) -> None:
    """One row per instance; wall-time columns are opt-in so that
    fixed-seed reports are byte-identical across runs."""
    fields = _CSV_FIELDS + (_TIME_FIELDS if include_times else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in sorted(rows, key=lambda r: r.instance_id):
            record = {
                **{f: getattr(row, f) for f in _CSV_FIELDS if f != "reduction"},
                "reduction": row.reduction,
                "cold_time": row.cold_time,
                "warm_time": row.warm_time,
            }
            writer.writerow([_fmt(record[f]) for f in fields])


def read_rows_csv(path) -> list[BenchmarkRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                BenchmarkRow(
                    instance_id=rec["instance_id"],
                    category=rec["category"],
                    problem_hash=rec["problem_hash"],
                    cold_cost=float(rec["cold_cost"]),
                    cold_inner=int(rec["cold_inner"]),
                    cold_outer=int(rec["cold_outer"]),
                    cold_converged=rec["cold_converged"] == "1",
                    cold_time=float(rec.get("cold_time", 0.0) or 0.0),
                    warm_cost=float(rec["warm_cost"]),
                    warm_inner=int(rec["warm_inner"]),
                    warm_outer=int(rec["warm_outer"]),
                    warm_converged=rec["warm_converged"] == "1",
                    warm_time=float(rec.get("warm_time", 0.0) or 0.0),
                )
            )
    return rows


def render_table(summaries) -> str:
    """Table-I-style text summary: mean optimal cost and mean iterations to
    converge (mean run time in seconds)."""
    cats = [s.category for s in summaries]
    lines = []
    header = f"{'Method':<10} | " + " | ".join(f"{c:>22}" for c in cats)
    lines.append("Optimal cost")
    lines.append(header)
    for label, attr in (("SCP cold", "mean_cost_cold"), ("SCP warm", "mean_cost_warm")):
        cells = [f"{getattr(s, attr):>22.4f}" for s in summaries]
        lines.append(f"{label:<10} | " + " | ".join(cells))
    lines.append("")
    lines.append("# Iterations to converge (run time in seconds)")
    lines.append(header)
    for label, it_attr, t_attr in (
        ("SCP cold", "mean_inner_cold", "mean_time_cold"),
        ("SCP warm", "mean_inner_warm", "mean_time_warm"),
    ):
        cells = []
        for s in summaries:
            it, tt = getattr(s, it_attr), getattr(s, t_attr)
            cells.append(f"{it:.0f} ({tt:.1f} s)".rjust(22) if np.isfinite(it) else " " * 22)
        lines.append(f"{label:<10} | " + " | ".join(cells))
    lines.append("")
    lines.append(
        f"{'Category':<10} | {'pairs':>6} | {'fail':>4} | {'median red.':>11} | "
        f"{'mean red. +-95% CI':>20} | {'median |dcost|/cost':>19}"
    )
    for s in summaries:
        lines.append(
            f"{s.category:<10} | {s.converged_pairs:>6} | {s.failures:>4} | "
            f"{s.median_reduction:>10.1%} | "
            f"{s.mean_reduction:>9.1%} +- {s.reduction_ci95:<7.1%} | "
            f"{s.median_cost_rel_diff:>18.2%}"
        )
    return "\n".join(lines)

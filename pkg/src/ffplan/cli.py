"""ffplan command line: solve single problems, generate datasets, train the
warm-start model, and run paired cold/warm benchmarks.

Exit codes: 0 success, 1 solver failure, 2 invalid input, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import bench as bench_mod
from . import warmstart as ws
from .conic import SolverSettings
from .gusto import GustoConfig, load_config, solve_cold, solve_ocp, solve_warm
from .kvfile import KvError
from .ocp import load_problem, save_trajectory_csv

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_INVALID_INPUT = 2
EXIT_IO_ERROR = 3


def _add_common(parser):
    parser.add_argument("--config", help="gusto./solver. key=value config file")
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")


def _load_configs(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return GustoConfig(), SolverSettings()


def _progress(label):
    def show(done, total):
        if done == total or done % 25 == 0:
            print(f"{label}: {done}/{total}", file=sys.stderr)

    return show


def cmd_solve(args) -> int:
    cfg, settings = _load_configs(args)
    params = load_problem(args.problem)
    if args.model and not args.cold:
        model = ws.load_model(args.model)
        report = solve_warm(params, model, cfg, settings)
    else:
        report = solve_cold(params, cfg, settings)

    save_trajectory_csv(report.trajectory, args.out)
    if args.plot:
        from .plots import save_trajectory_plot

        save_trajectory_plot(report.trajectory, params, args.plot)
    print(
        f"status={report.status.value} cost={report.final_cost:.6g} "
        f"outer={report.outer_iterations} inner={report.total_inner_iterations} "
        f"gbar={report.final_gbar:.3g}"
    )
    return EXIT_OK if report.converged else EXIT_SOLVER_FAILURE


def cmd_gen_data(args) -> int:
    cfg, settings = _load_configs(args)
    env_mix = {"jem": 1.0, "granite": 0.0, "mix": 11.0 / 13.0}[args.env]
    records, stats = ws.generate_dataset(
        count=args.count,
        env_mix=env_mix,
        cfg=cfg,
        solver_settings=settings,
        jobs=args.jobs,
        obstacle_fraction=args.obstacle_frac,
        seed=args.seed,
        n_steps=args.n_steps,
        progress=_progress("gen-data"),
    )
    ws.save_dataset(records, args.out)
    print(
        f"wrote {len(records)} records to {args.out} "
        f"({stats.failed}/{stats.requested} failed, "
        f"failure rate {stats.failure_rate:.1%})"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    records = ws.load_dataset(args.data)
    hyper = ws.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
    )
    model = ws.train(records, hyper)
    ws.save_model(model, args.out)
    print(
        f"trained on {len(records)} records for {args.epochs} epochs; "
        f"final standardized MSE {model.final_loss:.6g}; wrote {args.out}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, settings = _load_configs(args)
    suite = bench_mod.load_suite(args.suite)
    model = ws.load_model(args.model)
    rows, summaries = bench_mod.run_benchmark(
        suite, model, cfg, settings, jobs=args.jobs, progress=_progress("bench")
    )
    bench_mod.write_rows_csv(rows, args.out, include_times=args.times)
    if args.plot:
        from .plots import save_paired_iterations_plot

        save_paired_iterations_plot(rows, args.plot)
    print(bench_mod.render_table(summaries))
    return EXIT_OK


def cmd_report(args) -> int:
    rows = bench_mod.read_rows_csv(args.rows)
    if not rows:
        print("no benchmark rows found", file=sys.stderr)
        return EXIT_INVALID_INPUT
    summaries = bench_mod.summarize(rows)
    if args.plot:
        from .plots import save_paired_iterations_plot

        save_paired_iterations_plot(rows, args.plot)
    print(bench_mod.render_table(summaries))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ffplan",
        description="Free-flyer trajectory optimization with learned warm starts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--model", help="FFNN model for a warm start")
    p.add_argument("--cold", action="store_true", help="force the cold start")
    p.add_argument("--out", required=True, help="trajectory CSV output")
    p.add_argument("--plot", help="render a trajectory figure (svg/png/pdf)")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen-data", help="generate a training dataset")
    p.add_argument("--env", choices=["jem", "granite", "mix"], default="mix")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True, help="FFDS dataset output")
    p.add_argument("--obstacle-frac", type=float, default=0.5)
    p.add_argument("--n-steps", type=int, default=ws.DEFAULT_N_STEPS)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the warm-start model")
    p.add_argument("--data", required=True, help="FFDS dataset")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True, help="FFNN model output")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="run the paired cold/warm benchmark")
    p.add_argument("--suite", required=True, help="suite definition file")
    p.add_argument("--model", required=True, help="FFNN model")
    p.add_argument("--out", required=True, help="per-instance CSV output")
    p.add_argument("--plot", help="paired-iterations figure (svg/png/pdf)")
    p.add_argument("--times", action="store_true",
                   help="include wall-time columns in the CSV")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="summarize an existing benchmark CSV")
    p.add_argument("--rows", required=True, help="benchmark CSV from 'bench'")
    p.add_argument("--plot", help="paired-iterations figure (svg/png/pdf)")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR


if __name__ == "__main__":
    sys.exit(main())

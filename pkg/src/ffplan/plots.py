"""Matplotlib figure rendering for the report path (SVG/PNG/PDF by file
extension)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import dynamics as dyn

COLD_COLOR = "#4C72B0"
WARM_COLOR = "#DD8452"


def save_paired_iterations_plot(rows, path, title="Cold vs. warm start iterations"):
    """Paired-points plot: per instance, cold and warm inner-iteration
    counts connected by a line, grouped by category, with group means and
    95% confidence-interval bars."""
    categories = []
    for row in rows:
        if row.category not in categories:
            categories.append(row.category)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    gap = 0.32
    for k, category in enumerate(categories):
        pairs = [
            r for r in rows
            if r.category == category and r.cold_converged and r.warm_converged
        ]
        if not pairs:
            continue
        x_cold, x_warm = k - gap / 2, k + gap / 2
        cold = np.array([r.cold_inner for r in pairs], dtype=float)
        warm = np.array([r.warm_inner for r in pairs], dtype=float)
        for c, w in zip(cold, warm):
            ax.plot([x_cold, x_warm], [c, w], color="0.75", lw=0.7, zorder=1)
        ax.scatter(np.full_like(cold, x_cold), cold, s=14, color=COLD_COLOR, zorder=2)
        ax.scatter(np.full_like(warm, x_warm), warm, s=14, color=WARM_COLOR, zorder=2)
        for x, vals in ((x_cold, cold), (x_warm, warm)):
            mean = float(np.mean(vals))
            ci = 1.96 * float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            ax.errorbar(
                x, mean, yerr=ci, fmt="o", color="black", capsize=4,
                markersize=5, zorder=3,
            )

    ax.set_xticks(range(len(categories)))
    ax.set_xticklabels(categories)
    ax.set_ylabel("Inner (ADMM) iterations to converge")
    ax.set_title(title)
    handles = [
        plt.Line2D([], [], marker="o", ls="", color=COLD_COLOR, label="cold"),
        plt.Line2D([], [], marker="o", ls="", color=WARM_COLOR, label="warm"),
        plt.Line2D([], [], marker="o", ls="", color="black", label="mean ± 95% CI"),
    ]
    ax.legend(handles=handles, loc="best", frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_trajectory_plot(traj, params, path, title="Planned trajectory"):
    """Three-panel trajectory summary: top-down path with obstacle and goal,
    speed profiles against their limits, control-effort profiles."""
    t_states = np.arange(traj.N + 1) * traj.dt
    t_controls = np.arange(traj.N) * traj.dt
    veh = params.vehicle

    fig, axes = plt.subplots(1, 3, figsize=(11.0, 3.4))

    ax = axes[0]
    r = traj.positions()
    ax.plot(r[:, 0], r[:, 1], "-", color=COLD_COLOR, lw=1.5)
    ax.plot(r[0, 0], r[0, 1], "o", color=COLD_COLOR, label="start")
    ax.plot(params.r_goal[0], params.r_goal[1], "*", color="#55A868", ms=12, label="goal")
    goal_ring = plt.Circle(
        params.r_goal[:2], params.delta_goal, fill=False, color="#55A868", ls=":"
    )
    ax.add_patch(goal_ring)
    for obs in params.obstacles:
        lo = obs.center - obs.half_extents
        ax.add_patch(
            plt.Rectangle(lo[:2], 2 * obs.half_extents[0], 2 * obs.half_extents[1],
                          color="0.55", alpha=0.6)
        )
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("top-down path")

    ax = axes[1]
    ax.plot(t_states, np.linalg.norm(traj.states[:, dyn.V_SLC], axis=1),
            color=COLD_COLOR, label="|v|")
    ax.plot(t_states, np.linalg.norm(traj.states[:, dyn.W_SLC], axis=1),
            color=WARM_COLOR, label="|w|")
    ax.axhline(veh.v_max, color=COLD_COLOR, ls=":", lw=0.8)
    ax.axhline(veh.w_max, color=WARM_COLOR, ls=":", lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("speed [m/s], rate [rad/s]")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("speeds vs. limits")

    ax = axes[2]
    ax.plot(t_controls, np.linalg.norm(traj.controls[:, dyn.F_SLC], axis=1),
            color=COLD_COLOR, label="|F|")
    ax.plot(t_controls, np.linalg.norm(traj.controls[:, dyn.M_SLC], axis=1),
            color=WARM_COLOR, label="|M|")
    ax.axhline(veh.F_max, color=COLD_COLOR, ls=":", lw=0.8)
    ax.axhline(veh.M_max, color=WARM_COLOR, ls=":", lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("force [N], moment [N m]")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("actuation vs. limits")

    for ax in axes:
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

"""Static report figures (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIG_SIZE = (5.0, 3.6)


def _finish(fig, ax, path) -> Path:
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_trajectory(pattern, trajectory, path, width_mm: float = 101.6) -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    poly = pattern.polyline() * width_mm
    ax.plot(poly[:, 0], poly[:, 1], color="0.7", lw=3, label="pattern")
    for i, seg in enumerate(trajectory.segments):
        ax.plot(seg[:, 0], seg[:, 1], ".-", ms=3, lw=1, label=f"segment {i}")
        ax.annotate("", xy=seg[1], xytext=seg[0], arrowprops={"arrowstyle": "->"})
    ax.set_xlim(0, width_mm)
    ax.set_ylim(0, width_mm)
    ax.set_aspect("equal")
    ax.set_xlabel("material x (mm)")
    ax.set_ylabel("material y (mm)")
    ax.legend(fontsize=7, loc="upper right")
    return _finish(fig, ax, path)


def plot_episode(result, path, width_mm: float = 101.6, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.plot(result.intended[:, 0], result.intended[:, 1], color="0.6", lw=2, label="intended")
    ax.plot(result.achieved[:, 0], result.achieved[:, 1], "r.", ms=4, label="achieved")
    good = result.rewards.astype(bool)
    ax.plot(result.achieved[good, 0], result.achieved[good, 1], "g.", ms=4, label="on pattern")
    ax.set_xlim(0, width_mm)
    ax.set_ylim(0, width_mm)
    ax.set_aspect("equal")
    ax.set_xlabel("material x (mm)")
    ax.set_ylabel("material y (mm)")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    return _finish(fig, ax, path)


def plot_training(log, path) -> Path:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    it = [r.iteration for r in log]
    ax.plot(it, [r.best_fitness for r in log], "o-", label="best ever")
    ax.plot(it, [r.mean_fitness for r in log], "s--", label="population mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("fitness")
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def plot_grasp_reports(reports, best, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ok = [r for r in reports if r.ok]
    xy = np.array([r.material for r in ok]) if ok else np.zeros((0, 2))
    sc = ax.scatter(xy[:, 0], xy[:, 1], c=[r.score for r in ok], cmap="viridis_r", s=40)
    ax.plot(*best.material, "r*", ms=14, label=f"chosen ({best.vertex})")
    fig.colorbar(sc, ax=ax, label="normalized score")
    ax.set_aspect("equal")
    ax.set_xlabel("material x (mm)")
    ax.set_ylabel("material y (mm)")
    ax.legend(fontsize=7)
    return _finish(fig, ax, path)


def plot_series(t, series: dict, path, xlabel: str = "t (s)", ylabel: str = "") -> Path:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for name, y in series.items():
        ax.plot(t, y, lw=1, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def plot_budget(reports: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    data = [[w for _, w in rep.per_trial] for rep in reports.values()]
    ax.boxplot(data)
    ax.set_xticks(range(1, len(reports) + 1), list(reports))
    ax.set_ylabel("worst tracking error per trial")
    return _finish(fig, ax, path)


def plot_bench(rows, path) -> Path:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    threads = [r["threads"] for r in rows]
    ax.plot(threads, [r["episodes_per_s"] for r in rows], "o-")
    ax.set_xlabel("worker threads")
    ax.set_ylabel("episodes / s")
    return _finish(fig, ax, path)

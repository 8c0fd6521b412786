"""CSV exports and matplotlib figures for search runs and sweeps."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CURVE_HEADER = "iteration,mean_fitness,std_fitness,best_fitness"
PARETO_HEADER = "accuracy,size_bytes"


def read_history(path) -> list[dict]:
    records = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            records.append(json.loads(line))
    if not records:
        raise ValueError(f"empty history file {path}")
    return records


def history_points(records: list[dict]) -> list[tuple[float, int]]:
    """(accuracy, size) of every evaluated individual, initial population included."""
    points: list[tuple[float, int]] = []
    for rec in records:
        for member in rec.get("population") or []:
            points.append((float(member["accuracy"]), int(member["size_bytes"])))
        if rec.get("child_id") is not None:
            points.append((float(rec["child_accuracy"]), int(rec["child_size_bytes"])))
    return points


def write_curve_csv(records: list[dict], path) -> None:
    lines = [CURVE_HEADER]
    for rec in records:
        lines.append(
            f"{rec['iteration']},{rec['mean_fitness']!r},{rec['std_fitness']!r},{rec['best_fitness']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_pareto_csv(points, path) -> None:
    lines = [PARETO_HEADER]
    for acc, size in points:
        lines.append(f"{acc!r},{size}")
    Path(path).write_text("\n".join(lines) + "\n")


def plot_fitness_curve(records: list[dict], path, title: str = "Search progress") -> None:
    iters = [rec["iteration"] for rec in records]
    mean = [rec["mean_fitness"] for rec in records]
    std = [rec["std_fitness"] for rec in records]
    best = [rec["best_fitness"] for rec in records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(iters, mean, label="population mean", color="#1f77b4")
    ax.fill_between(
        iters,
        [m - s for m, s in zip(mean, std)],
        [m + s for m, s in zip(mean, std)],
        alpha=0.2,
        color="#1f77b4",
        label="mean ± std",
    )
    ax.plot(iters, best, label="running best", color="#d62728")
    ax.set_xlabel("iteration")
    ax.set_ylabel("fitness")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pareto(points, front, path, title: str = "Accuracy vs size") -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if points:
        xs = [s for _, s in points]
        ys = [a for a, _ in points]
        ax.scatter(xs, ys, s=18, alpha=0.35, color="#7f7f7f", label="evaluated")
    fx = [s for _, s in front]
    fy = [a for a, _ in front]
    ax.plot(fx, fy, "o-", color="#d62728", label="non-dominated front")
    ax.set_xlabel("size (bytes)")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(curves: dict, path, title: str = "Population mean fitness") -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (pop_size, sample_size), records in sorted(curves.items()):
        iters = [rec["iteration"] for rec in records]
        mean = [rec["mean_fitness"] for rec in records]
        ax.plot(iters, mean, label=f"#P={pop_size}, #S={sample_size}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean fitness")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Figures written next to the CLI's CSV outputs."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def figure_path(csv_path, suffix: str = "") -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + suffix + ".png")


def plot_tour(instance, tour, path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 5))
        pts = instance.coords[np.append(tour, tour[0])]
        ax.plot(pts[:, 0], pts[:, 1], "-", color="0.35", lw=1.2, zorder=1)
        ax.scatter(instance.coords[:, 0], instance.coords[:, 1], s=18, color="C0", zorder=2)
        ax.scatter(*instance.coords[tour[0]], s=60, marker="*", color="C3", zorder=3)
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_aspect("equal")
        ax.set_title(title)
        return _save(fig, path)


def plot_training_curve(metrics_csv, path) -> Path:
    with open(metrics_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    raw = np.array([float(r["mean_raw_len"]) for r in rows])
    improved = np.array([float(r["mean_improved_len"]) for r in rows])
    sizes = np.array([float(r["n"]) for r in rows])
    x = np.arange(1, len(rows) + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        # per-city lengths so curriculum size changes stay comparable
        ax.plot(x, raw / sizes, lw=0.8, label="sampled tour")
        ax.plot(x, improved / sizes, lw=0.8, label="after local search")
        ax.set_xlabel("step")
        ax.set_ylabel("mean length / n")
        ax.legend()
        return _save(fig, path)


def plot_reports(reports: Sequence, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        labels = [f"{r.solver}\nn={r.n}" for r in reports]
        ax.bar(range(len(reports)), [r.mean_length for r in reports], color="C0")
        ax.set_xticks(range(len(reports)), labels)
        ax.set_ylabel("mean tour length")
        for i, r in enumerate(reports):
            if r.gap_pct is not None:
                ax.annotate(f"{r.gap_pct:.2f}%", (i, r.mean_length), ha="center", va="bottom", fontsize=8)
        return _save(fig, path)


def plot_ablation(rows: Sequence, path) -> Path:
    variants = list(dict.fromkeys(r.variant for r in rows))
    sizes = sorted({r.n for r in rows})
    gap = {(r.variant, r.n): r.gap_pct for r in rows}
    width = 0.8 / max(len(variants), 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, v in enumerate(variants):
            ys = [gap.get((v, n), np.nan) for n in sizes]
            ax.bar(np.arange(len(sizes)) + k * width, ys, width, label=v)
        ax.set_xticks(np.arange(len(sizes)) + 0.4 - width / 2, [f"TSP{n}" for n in sizes])
        ax.set_ylabel(f"gap % vs {rows[0].reference}" if rows else "gap %")
        ax.legend(fontsize=8)
        return _save(fig, path)

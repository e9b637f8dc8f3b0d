"""Figure rendering for run and comparison reports.

Figures are written next to the CSV they summarize; the CSV stays the
ground truth, the PNGs are the quick look.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .methods import CurvePoint, HardestTaskReport, MethodRun, demos_to_threshold, mean_curve

_METHOD_STYLE = {
    "BC": dict(color="#888888", linestyle="--"),
    "UniformDAgger": dict(color="#1f77b4"),
    "MTDAgger-TN": dict(color="#d62728"),
    "MTDAgger-PG": dict(color="#2ca02c"),
    "MTDAgger-TN-noKF": dict(color="#ff7f0e", linestyle=":"),
}


def _style(method: str) -> dict:
    return dict(_METHOD_STYLE.get(method, {}))


def render_run_figure(run: MethodRun, path: Path | str) -> Path:
    path = Path(path)
    xs = [p.cumulative_demos_per_task for p in run.points]
    ys = [p.mean_success for p in run.points]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(xs, ys, marker="o", **_style(run.method))
    ax.set_xlabel("expert demos collected per task")
    ax.set_ylabel("mean success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"{run.method} (seed {run.seed})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_comparison_figures(
    results: Mapping[str, Sequence[CurvePoint]],
    thresholds: Sequence[float],
    hardest: HardestTaskReport,
    out_dir: Path | str,
) -> list[Path]:
    out_dir = Path(out_dir)
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for method, points in results.items():
        curve = mean_curve(points)
        xs = [c[0] for c in curve]
        means = [c[1] for c in curve]
        stds = [c[2] for c in curve]
        ax.plot(xs, means, marker="o", markersize=3, label=method, **_style(method))
        ax.fill_between(
            xs,
            [m - s for m, s in zip(means, stds)],
            [m + s for m, s in zip(means, stds)],
            alpha=0.15,
            color=_style(method).get("color"),
        )
    ax.set_xlabel("expert demos collected per task")
    ax.set_ylabel("mean success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "learning_curves.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.6, 3.4))
    methods = list(results)
    width = 0.8 / max(len(thresholds), 1)
    crossings = {
        (m, t): demos_to_threshold(results[m], t) for m in methods for t in thresholds
    }
    top = max([v for v in crossings.values() if v is not None], default=1.0)
    for j, threshold in enumerate(thresholds):
        values, labels = [], []
        for method in methods:
            value = crossings[(method, threshold)]
            values.append(value if value is not None else 0.0)
            labels.append("" if value is not None else "unreached")
        positions = [i + j * width for i in range(len(methods))]
        bars = ax.bar(positions, values, width=width, label=f"{threshold:.0%}")
        for bar, text in zip(bars, labels):
            if text:
                ax.text(bar.get_x() + bar.get_width() / 2, 0.02 * top, text, rotation=90,
                        ha="center", va="bottom", fontsize=7)
    ax.set_ylim(0, top * 1.1)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(methods))])
    ax.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("demos per task to threshold")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "demos_to_threshold.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for method, curve in hardest.curves.items():
        xs = [c[0] for c in curve]
        ys = [c[1] for c in curve]
        ax.plot(xs, ys, marker="o", markersize=3, label=method, **_style(method))
    ax.set_xlabel("expert demos collected per task")
    ax.set_ylabel(f"success rate on task {hardest.task_index}")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(f"hardest task ({hardest.task_index})")
    fig.tight_layout()
    path = out_dir / "hardest_task.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written

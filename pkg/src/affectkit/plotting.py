"""Figures written next to the CSV/JSON outputs.

Uses ``matplotlib.figure.Figure`` directly with the Agg canvas, so nothing
touches pyplot state or needs a display.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator

from .annotations import AU_NAMES, StatsReport

if TYPE_CHECKING:
    from .harness.experiment import ComparisonReport, EpochRecord

TASK_COLORS = {"expr": "#1f77b4", "au": "#d62728", "va": "#2ca02c"}
TASK_LABELS = {"expr": "Expression", "au": "AU", "va": "VA"}


def _figure(width: float = 7.0, height: float = 4.0) -> Figure:
    fig = Figure(figsize=(width, height), dpi=100, layout="constrained")
    FigureCanvasAgg(fig)
    return fig


def _style(ax) -> None:
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(True, alpha=0.3, linewidth=0.6)


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    return path


def plot_epoch_curves(epochs: "list[EpochRecord]", path: str | Path, title: str = "") -> Path:
    """Train (solid) and validation (dashed) loss per task, plus the learning rate."""
    fig = _figure(9.0, 4.0)
    ax, ax_lr = fig.subplots(1, 2, width_ratios=[3, 1])
    x = [e.epoch for e in epochs]
    for task in ("expr", "au", "va"):
        color = TASK_COLORS[task]
        ax.plot(x, [getattr(e, f"train_loss_{task}") for e in epochs], color=color,
                label=f"train {TASK_LABELS[task]}")
        ax.plot(x, [getattr(e, f"val_loss_{task}") for e in epochs], color=color, linestyle="--",
                label=f"val {TASK_LABELS[task]}")
    ax.set_xlabel("epoch")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8, ncol=2, frameon=False)
    _style(ax)
    ax_lr.step(x, [e.lr for e in epochs], where="post", color="0.3")
    ax_lr.set_yscale("log")
    ax_lr.set_xlabel("epoch")
    ax_lr.set_ylabel("learning rate")
    _style(ax_lr)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_comparison(report: "ComparisonReport", path: str | Path) -> Path:
    """Grouped bars of challenge scores per task, one bar per preset."""
    tasks = ("va", "expr", "au")
    names = report.presets
    fig = _figure(7.0, 4.0)
    ax = fig.subplots()
    width = 0.8 / max(len(names), 1)
    centers = np.arange(len(tasks))
    for i, name in enumerate(names):
        # tasks a preset did not train get no bar at all
        scored = [(c, report.scores[name][t]) for c, t in zip(centers, tasks) if report.scores[name][t] is not None]
        if not scored:
            continue
        pos = [c - 0.4 + width * (i + 0.5) for c, _ in scored]
        vals = [v for _, v in scored]
        bars = ax.bar(pos, vals, width * 0.9, label=name, color=f"C{i}")
        for bar, v in zip(bars, vals):
            ax.annotate(f"{v:.3f}", (bar.get_x() + bar.get_width() / 2, v), ha="center",
                        va="bottom", fontsize=7, xytext=(0, 2), textcoords="offset points")
    ax.set_xticks(centers, ["P_VA\n(mean CCC)", "P_EXPR\n(macro F1)", "P_AU\n(macro F1)"])
    ax.set_ylabel("challenge score")
    lo = min([0.0] + [v for s in report.scores.values() for v in s.values() if v is not None])
    ax.set_ylim(lo, 1.05)
    ax.legend(fontsize=8, frameon=False)
    _style(ax)
    return _save(fig, path)


def plot_distribution(stats: StatsReport, path: str | Path) -> Path:
    """Class counts (EXPR), AU positive rates (AU) or a counts bar (VA)."""
    fig = _figure(7.0, 3.5)
    ax = fig.subplots()
    if stats.class_counts is not None:
        names = list(stats.class_counts)
        ax.bar(names, [stats.class_counts[n] for n in names], color=TASK_COLORS["expr"])
        ax.set_ylabel("frames")
        ax.set_title(f"Expression distribution ({stats.split})")
    elif stats.au_positive_rates is not None:
        ax.bar(AU_NAMES, [stats.au_positive_rates[n] for n in AU_NAMES], color=TASK_COLORS["au"])
        ax.set_ylabel("positive rate")
        ax.set_ylim(0, 1)
        ax.set_title(f"Action unit prevalence ({stats.split})")
    else:
        ax.bar(["valid", "disregarded"], [stats.valid, stats.invalid], color=TASK_COLORS["va"])
        ax.set_ylabel("frames")
        ax.set_title(f"VA frames ({stats.split})")
    ax.tick_params(axis="x", labelsize=8)
    _style(ax)
    return _save(fig, path)

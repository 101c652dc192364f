"""Figure rendering for batch results.

Bar charts of capture time and flexibility plus the cumulative reward curves,
written as PNG files next to the CSV output.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _bar_chart(ax, labels, means, stds, ylabel):
    x = np.arange(len(labels))
    ax.bar(x, means, yerr=stds, capsize=4, color="#4878cf", edgecolor="black")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)


def render_figures(summaries: dict, out_dir) -> list:
    """Render capture-time, flexibility and reward-development figures.

    ``summaries`` maps case name to a BatchSummary; a single-case dict works
    too (the reward curve is still useful there).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases = list(summaries)
    written = []

    fig, ax = plt.subplots(figsize=(5.5, 3.5), constrained_layout=True)
    _bar_chart(ax, cases,
               [summaries[c].mean_capture for c in cases],
               [summaries[c].std_capture for c in cases],
               "mean capture ticks")
    ax.set_title("Average capture time")
    path = out_dir / "capture_time.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.5, 3.5), constrained_layout=True)
    _bar_chart(ax, cases,
               [summaries[c].mean_flexibility for c in cases],
               [summaries[c].std_flexibility for c in cases],
               "mean reorganizations")
    ax.set_title("Average flexibility degree")
    path = out_dir / "flexibility.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.5, 3.5), constrained_layout=True)
    for case in cases:
        curve = np.cumsum(summaries[case].mean_trajectory)
        if len(curve):
            ax.plot(np.arange(1, len(curve) + 1), curve, label=case)
    ax.set_xlabel("tick")
    ax.set_ylabel("mean cumulative reward")
    ax.set_title("Development of reward")
    if cases:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    path = out_dir / "reward_development.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written

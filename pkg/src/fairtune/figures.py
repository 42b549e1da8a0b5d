"""Matplotlib renderers for the report path. All figures go straight to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .experiment import ResultRow  # noqa: E402
from .outcome import read_trajectory  # noqa: E402

BIAS_COLOR = "#d95f02"
BA_COLOR = "#1b9e77"


def trajectory_figure(trajectory_path, out_path) -> Path:
    """Bias and balanced accuracy against evaluation index for one debias run."""
    records = read_trajectory(trajectory_path)
    xs = list(range(len(records)))
    bias = [r["bias"] for r in records]
    ba = [r["balanced_accuracy"] for r in records]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(xs, bias, color=BIAS_COLOR, label="bias")
    ax.axhline(0.0, color="grey", lw=0.6, ls=":")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("bias", color=BIAS_COLOR)
    ax2 = ax.twinx()
    ax2.plot(xs, ba, color=BA_COLOR, label="balanced accuracy")
    ax2.set_ylabel("balanced accuracy", color=BA_COLOR)
    ax2.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def summary_figure(rows: list[ResultRow], out_path) -> Path:
    """Per-method bias and balanced accuracy with standard-deviation bars."""
    methods = [r.method for r in rows]
    xs = range(len(methods))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.bar(xs, [r.bias_mean for r in rows], yerr=[r.bias_sd for r in rows],
            color=BIAS_COLOR, capsize=3)
    ax1.axhline(0.0, color="grey", lw=0.6)
    ax1.set_xticks(list(xs), methods, rotation=30, ha="right")
    ax1.set_title("bias")
    ax2.bar(xs, [r.ba_mean for r in rows], yerr=[r.ba_sd for r in rows],
            color=BA_COLOR, capsize=3)
    ax2.set_xticks(list(xs), methods, rotation=30, ha="right")
    ax2.set_ylim(0.0, 1.0)
    ax2.set_title("balanced accuracy")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def sweep_figure(grid: dict, parameter: str, out_path) -> Path:
    """Bias and balanced accuracy of every method across the swept parameter."""
    values = sorted(grid)
    methods = [row.method for row in grid[values[0]]]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    for method in methods:
        bias = [next(r.bias_mean for r in grid[v] if r.method == method) for v in values]
        ba = [next(r.ba_mean for r in grid[v] if r.method == method) for v in values]
        ax1.plot(values, bias, marker="o", label=method)
        ax2.plot(values, ba, marker="o", label=method)
    ax1.axhline(0.0, color="grey", lw=0.6)
    ax1.set_xlabel(parameter)
    ax1.set_title("bias")
    ax2.set_xlabel(parameter)
    ax2.set_ylim(0.0, 1.0)
    ax2.set_title("balanced accuracy")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)

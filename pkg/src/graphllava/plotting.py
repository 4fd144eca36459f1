"""Figures for evaluation reports, loss curves and the length-trend experiment.

Everything renders off-screen (Agg) straight to a file; nothing is shown.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 7,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 120,
}

COLORS = {"total": "#b8c4d6", "correct": "#2f5d8a", "graph": "#2f5d8a", "text": "#c2583a", "random": "#8a8a8a"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_buckets(buckets: Mapping[str, Mapping[str, int]], path: str | Path, title: str = "") -> Path:
    """Total vs correct answers per description-length bucket (empty buckets are dropped)."""
    labels = [b for b, c in buckets.items() if c["total"]]
    total = np.array([buckets[b]["total"] for b in labels])
    correct = np.array([buckets[b]["correct"] for b in labels])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        x = np.arange(len(labels))
        ax.bar(x, total, color=COLORS["total"], label="total")
        ax.bar(x, correct, color=COLORS["correct"], label="correct")
        ax.set_xticks(x, labels, rotation=45, ha="right")
        ax.set_xlabel("description length (tokens)")
        ax.set_ylabel("answers")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_bucket_accuracy(tables: Mapping[str, Mapping[str, Mapping[str, float]]], path: str | Path,
                         budget: int | None = None, title: str = "") -> Path:
    """Accuracy per bucket, one line per mode; ``budget`` marks the context limit."""
    first = next(iter(tables.values()))
    labels = [b for b in first if any(t[b]["total"] for t in tables.values())]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        x = np.arange(len(labels))
        for mode, table in tables.items():
            acc = [table[b]["correct"] / table[b]["total"] if table[b]["total"] else np.nan for b in labels]
            ax.plot(x, acc, marker="o", color=COLORS.get(mode), label=mode)
        if budget is not None:
            lows = [int(b.split("-")[0].rstrip("+")) for b in labels]
            cut = sum(lo < budget for lo in lows) - 0.5
            ax.axvline(cut, color="k", lw=0.8, ls="--")
            ax.text(cut, 1.0, " max_seq", fontsize=7, va="top")
        ax.axhline(0.5, color=COLORS["random"], lw=0.6, ls=":")
        ax.set_ylim(0, 1.02)
        ax.set_xticks(x, labels, rotation=45, ha="right")
        ax.set_xlabel("description length (tokens)")
        ax.set_ylabel("yes/no accuracy")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_losses(curves: Mapping[str, Sequence[float]], path: str | Path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        for name, ys in curves.items():
            ax.plot(np.arange(1, len(ys) + 1), ys, label=name, lw=1)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_judge(shares: Mapping[str, float], path: str | Path, title: str = "") -> Path:
    """Horizontal bar of judge preference shares."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 1.8))
        names = list(shares)
        vals = [shares[n] for n in names]
        ax.barh(names, vals, color=[COLORS["graph"], COLORS["text"], COLORS["random"]][: len(names)])
        for i, v in enumerate(vals):
            ax.text(v + 0.01, i, f"{100 * v:.1f}%", va="center", fontsize=8)
        ax.set_xlim(0, 1.1)
        ax.set_xlabel("share of valid verdicts")
        if title:
            ax.set_title(title)
        return _save(fig, path)

"""Figure rendering for delineated signals, training curves, and recall.

All functions draw with the Agg backend and write PNG files, so they
work headless; each returns the path it wrote.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .delineation import BeatAnnotations


def plot_delineation(
    lead: np.ndarray,
    fs: int,
    ann: Optional[BeatAnnotations],
    path: str | Path,
    title: str = "Lead II",
) -> Path:
    """Trace with R/P/T peak markers and QRS onset/offset ticks."""
    path = Path(path)
    t = np.arange(lead.size) / fs
    fig, ax = plt.subplots(figsize=(12, 3.2))
    ax.plot(t, lead, linewidth=0.8, color="#1f4e79")
    if ann is not None:
        r = ann.r_indices
        ax.plot(t[r], lead[r], "o", color="#c0392b", markersize=4, label="R")
        p_idx = [i for i in ann.p_peak if i is not None]
        if p_idx:
            ax.plot(t[p_idx], lead[p_idx], "^", color="#27ae60",
                    markersize=4, label="P")
        t_idx = [i for i in ann.t_peak if i is not None]
        if t_idx:
            ax.plot(t[t_idx], lead[t_idx], "v", color="#8e44ad",
                    markersize=4, label="T")
        for i in ann.qrs_onset + ann.qrs_offset:
            if i is not None:
                ax.axvline(t[i], color="#7f8c8d", linewidth=0.5, alpha=0.6)
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("amplitude (mV)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(
    entries: Sequence[dict], path: str | Path
) -> Path:
    """Loss components versus step from training-log entries."""
    path = Path(path)
    steps = [e["step"] for e in entries]
    fig, ax = plt.subplots(figsize=(8, 4))
    for key, color in (("l_con", "#1f4e79"), ("l_cap", "#c0392b"),
                       ("total", "#27ae60")):
        if entries and key in entries[0]:
            ax.plot(steps, [e[key] for e in entries], label=key,
                    linewidth=1.0, color=color)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_recall_bars(
    recalls: dict[int, tuple[float, float]], path: str | Path
) -> Path:
    """Grouped bars of both retrieval directions per K."""
    path = Path(path)
    ks = sorted(recalls)
    x = np.arange(len(ks))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - width / 2, [recalls[k][0] for k in ks], width,
           label="ECG to text", color="#1f4e79")
    ax.bar(x + width / 2, [recalls[k][1] for k in ks], width,
           label="text to ECG", color="#c0392b")
    ax.set_xticks(x, [f"R@{k}" for k in ks])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("recall")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

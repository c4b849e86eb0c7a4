"""Figure rendering for training and ablation reports.

Figures are drawn straight onto matplotlib Figure objects (no pyplot,
no global backend state), so this works in headless runs and never
touches an interactive toolkit.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

from matplotlib.figure import Figure

from .model import TrainReport
from .schedule import KernelSchedule, sigma_at


def save_loss_curves(reports: Mapping[str, TrainReport], path: str | Path) -> Path:
    """Validation (solid) and training (dashed) loss per epoch, one
    color per labeled run, log-scaled y."""
    if not reports:
        raise ValueError("no reports to plot")
    fig = Figure(figsize=(7.0, 4.5))
    ax = fig.subplots()
    for label, report in reports.items():
        epochs = range(report.epochs)
        (line,) = ax.plot(epochs, report.val_losses, label=f"{label} (val)")
        ax.plot(
            epochs,
            report.train_losses,
            linestyle="--",
            alpha=0.6,
            color=line.get_color(),
            label=f"{label} (train)",
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    return out


def save_schedule_curves(
    schedules: Mapping[str, KernelSchedule], path: str | Path
) -> Path:
    """Kernel width per epoch for each labeled schedule."""
    if not schedules:
        raise ValueError("no schedules to plot")
    fig = Figure(figsize=(7.0, 4.0))
    ax = fig.subplots()
    for label, schedule in schedules.items():
        xs = range(schedule.total_epochs + 1)
        ax.plot(xs, [sigma_at(schedule, t) for t in xs], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("sigma")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    return out


def save_ablation_chart(
    rows: Sequence[tuple[str, float, float]], path: str | Path
) -> Path:
    """Two-panel bar chart from (label, f1, apek) rows; missing APEK
    values (nan) are drawn as zero-height bars with a hatch."""
    if not rows:
        raise ValueError("no ablation rows to plot")
    fig = Figure(figsize=(8.0, 4.0))
    ax_f1, ax_apek = fig.subplots(1, 2)
    labels = [r[0] for r in rows]
    xs = range(len(rows))
    ax_f1.bar(xs, [r[1] for r in rows], color="tab:blue")
    ax_f1.set_xticks(list(xs), labels, rotation=30, ha="right", fontsize=8)
    ax_f1.set_ylabel("keypoint F1")
    ax_f1.set_ylim(0.0, 1.05)
    apeks = [0.0 if math.isnan(r[2]) else r[2] for r in rows]
    hatches = ["//" if math.isnan(r[2]) else "" for r in rows]
    bars = ax_apek.bar(xs, apeks, color="tab:orange")
    for bar, hatch in zip(bars, hatches):
        bar.set_hatch(hatch)
    ax_apek.set_xticks(list(xs), labels, rotation=30, ha="right", fontsize=8)
    ax_apek.set_ylabel("APEK (px)")
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    return out

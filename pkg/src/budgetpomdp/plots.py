"""Figures rendered from the harness outputs; the CSV files remain the primary product."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import MetricsRow, ScalingTable  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def policy_sweep(rows: Sequence[MetricsRow], path: str | Path) -> Path:
    """Mean survival (with standard errors) and mean repairs against budget, one line per policy."""
    fig, (ax_s, ax_r) = plt.subplots(1, 2, figsize=(10, 4))
    for name in dict.fromkeys(r.policy for r in rows):
        sel = sorted((r for r in rows if r.policy == name), key=lambda r: r.budget)
        b = [r.budget for r in sel]
        ax_s.errorbar(b, [r.mean_survival for r in sel], yerr=[r.stderr for r in sel], marker="o", capsize=3, label=name)
        ax_r.plot(b, [r.mean_repairs for r in sel], marker="o", label=name)
    ax_s.set_xlabel("budget")
    ax_s.set_ylabel("mean survival")
    ax_r.set_xlabel("budget")
    ax_r.set_ylabel("mean repairs per episode")
    ax_s.legend()
    return _save(fig, path)


def forest_fit(fitted: Sequence[float], predicted: Sequence[float], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    fitted = np.asarray(fitted)
    ax.scatter(fitted, predicted, s=14)
    lo, hi = float(min(fitted.min(), np.min(predicted))), float(max(fitted.max(), np.max(predicted)))
    ax.plot([lo, hi], [lo, hi], color="grey", lw=1)
    ax.set_xlabel("fitted beta")
    ax.set_ylabel("predicted beta")
    return _save(fig, path)


def allocation_violins(survival: Mapping[str, np.ndarray], path: str | Path) -> Path:
    """Per-component mean survival distribution for each allocation method."""
    fig, ax = plt.subplots(figsize=(5, 4))
    names = list(survival)
    data = [np.asarray(survival[n]).mean(axis=0) for n in names]
    ax.violinplot(data, showmeans=True)
    ax.set_xticks(range(1, len(names) + 1), names)
    ax.set_ylabel("mean survival per component")
    return _save(fig, path)


def scaling(table: ScalingTable, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for stage in table.seconds:
        ax.loglog(table.counts, table.mean(stage), marker="o", label=f"{stage} (slope {table.slope(stage):.2f})")
    ax.set_xlabel("components")
    ax.set_ylabel("seconds")
    ax.legend(fontsize=8)
    return _save(fig, path)


def training_curve(curve: Sequence[Mapping], path: str | Path, label: str = "") -> Path:
    fig, (ax_r, ax_s) = plt.subplots(1, 2, figsize=(10, 3.5))
    steps = [row["step"] for row in curve]
    ax_r.plot(steps, [row["mean_episode_reward"] for row in curve], label=label)
    ax_s.plot(steps, [row["mean_survival"] for row in curve], label=label)
    ax_r.set_xlabel("environment steps")
    ax_r.set_ylabel("mean episode reward")
    ax_s.set_xlabel("environment steps")
    ax_s.set_ylabel("mean episode survival")
    return _save(fig, path)

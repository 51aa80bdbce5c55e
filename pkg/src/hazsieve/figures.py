"""Report figures rendered straight to files.

The Agg backend draws without a display, and saved PNGs carry no software
or timestamp metadata, so rerunning a command reproduces the files byte
for byte.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import IntensityModel
from .pipeline import RateStudy

DPI = 120
_KIND_COLORS = {"sieve": "#1f77b4", "single_index": "#d62728"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return path


def weights_figure(report: dict, path: str | Path) -> Path:
    """Bar chart of the Gibbs weights, one panel per split."""
    splits = report["splits"]
    fig, axes = plt.subplots(
        len(splits), 1, figsize=(8.0, 2.2 * len(splits) + 0.8), squeeze=False, sharex=True
    )
    for ax, split in zip(axes[:, 0], splits):
        members = split["members"]
        idx = np.arange(len(members))
        colors = [_KIND_COLORS.get(m["kind"], "#7f7f7f") for m in members]
        ax.bar(idx, [m["weight"] for m in members], color=colors, width=0.9)
        ax.set_ylabel("weight")
        ax.set_title(f"split seed {split['split_seed']} ({len(members)} members)", fontsize=9)
    axes[-1, 0].set_xlabel("dictionary member")
    kinds = sorted({m["kind"] for s in splits for m in s["members"]})
    if len(kinds) > 1:
        handles = [plt.Rectangle((0, 0), 1, 1, color=_KIND_COLORS[k]) for k in kinds]
        axes[0, 0].legend(handles, kinds, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def surface_figure(model: IntensityModel, path: str | Path, grid: int = 129) -> Path:
    """The estimated intensity over time, as a curve (d = 0) or heatmap.

    With several covariates the heatmap varies the first one and pins the
    rest at 1/2.
    """
    t = np.linspace(0.0, 1.0, grid)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if model.d == 0:
        ax.plot(t, model.values(t, np.zeros((grid, 0))), color="#1f77b4")
        ax.set_ylabel("intensity")
    else:
        x1 = np.linspace(0.0, 1.0, grid)
        tt = np.repeat(t, grid)
        xx = np.full((grid * grid, model.d), 0.5)
        xx[:, 0] = np.tile(x1, grid)
        vals = model.values(tt, xx).reshape(grid, grid)
        mesh = ax.pcolormesh(t, x1, vals.T, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="intensity")
        ax.set_ylabel("x1" + (" (others at 0.5)" if model.d > 1 else ""))
    ax.set_xlabel("t")
    ax.set_title("estimated intensity")
    fig.tight_layout()
    return _save(fig, path)


def rate_figure(study: RateStudy, path: str | Path) -> Path:
    """Log-log risk against sample size: raw points plus the median line."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ns = [n for n, _, _ in study.rows]
    rs = [r for _, _, r in study.rows]
    ax.loglog(ns, rs, linestyle="none", marker="o", markersize=3,
              alpha=0.4, color="#1f77b4", label="runs")
    med = study.medians()
    ax.loglog([n for n, _ in med], [m for _, m in med], marker="s",
              color="#d62728", label="median")
    ax.set_xlabel("sample size")
    ax.set_ylabel("squared error")
    ax.set_title(f"error decay, slope {study.slope():.3f}")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)

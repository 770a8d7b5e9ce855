"""Figure rendering for the prediction reports.

Renders the observed field (unobserved sites blanked, targets outlined)
and the per-target interval chart next to the delimited outputs. Uses the
Agg backend so runs are headless-safe.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colors
from matplotlib.patches import Rectangle

from .field_sim import FieldOnGrid
from .predictor import ExperimentReport


def save_field_figure(path, field: FieldOnGrid, targets=()) -> None:
    """Heatmap of the observed values; unobserved sites white, targets boxed."""
    vals = field.value_grid()
    mask = field.mask_grid()
    shown = np.ma.masked_where(~mask, vals)
    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("white")
    norm = colors.Normalize(vmin=float(shown.min()), vmax=float(shown.max()))
    im = ax.imshow(
        shown,
        origin="lower",
        extent=(0.5, field.region.n2 + 0.5, 0.5, field.region.n1 + 0.5),
        cmap=cmap,
        norm=norm,
        interpolation="nearest",
    )
    for i, j in targets:
        ax.add_patch(Rectangle((j - 0.5, i - 0.5), 1.0, 1.0, fill=False, edgecolor="red", lw=1.2))
    ax.set_xlabel("j")
    ax.set_ylabel("i")
    ax.set_title("Observed field (targets outlined)")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_interval_figure(path, report: ExperimentReport) -> None:
    """Truth and predictions per target, with interval bars when present."""
    idx = np.arange(1, len(report.rows) + 1)
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    for k, row in zip(idx, report.rows):
        if row.interval is not None:
            lo, hi = row.interval
            ax.vlines(k, lo, hi, color="steelblue", lw=3, alpha=0.6)
    median_pred = [row.predictions.get(0.5) for row in report.rows]
    if any(v is not None for v in median_pred):
        ax.plot(
            idx,
            [np.nan if v is None else v for v in median_pred],
            "o",
            color="steelblue",
            label="median prediction",
        )
    ax.plot(idx, [row.truth for row in report.rows], "k_", markersize=12, label="truth")
    ax.set_xticks(idx)
    ax.set_xlabel("target")
    ax.set_ylabel("value")
    title = "Predictions per target"
    if report.interval_kind is not None:
        title += f" ({report.interval_kind} intervals)"
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_cv_curve_figure(path, curve) -> None:
    """Leave-one-out CV score against candidate bandwidths."""
    hs = [h for h, _ in curve]
    scores = [s for _, s in curve]
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    ax.plot(hs, scores, "o-", color="darkorange")
    ax.set_xscale("log")
    ax.set_xlabel("bandwidth")
    ax.set_ylabel("LOO CV score")
    ax.set_title("Mean-regression bandwidth selection")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

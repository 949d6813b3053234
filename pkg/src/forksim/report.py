"""Figures written next to the CSV reports.

Uses matplotlib's object API with the Agg canvas, so nothing touches the
pyplot state machine or needs a display.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
FIG_WIDTH = 4.5

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

BAR_COLOR = "#4eb3d3"
LINE_COLOR = "#08589e"


def _figure(width=FIG_WIDTH, height=None):
    fig = Figure(figsize=(width, height or width * GOLDEN))
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamp or version in the file so reruns give identical bytes
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def dmrt_bar_chart(grouping, path, ylabel, title=None, order=None):
    """Bar chart of treatment means with their DMRT letters on top.

    Args:
        grouping: a :class:`forksim.stats.DmrtGrouping`.
        path: output PNG file.
        ylabel: y-axis label including units.
        order: optional treatment order for the bars (default: as sorted).
    """
    means = dict(grouping.sorted_means)
    labels = list(order) if order is not None else [t for t, _ in grouping.sorted_means]
    vals = np.array([means[t] for t in labels], dtype=float)
    with mpl.rc_context(STYLE):
        fig, ax = _figure()
        pos = np.arange(len(labels))
        ax.bar(pos, vals, width=0.6, color=BAR_COLOR, edgecolor=LINE_COLOR)
        top = float(np.nanmax(np.abs(vals))) if vals.size else 1.0
        pad = 0.03 * (top or 1.0)
        for x, v, t in zip(pos, vals, labels):
            ax.text(x, v + pad if v >= 0 else v - pad, grouping.letters[t],
                    ha="center", va="bottom" if v >= 0 else "top", fontweight="bold")
        ax.set_xticks(pos)
        ax.set_xticklabels([str(t) for t in labels])
        ax.set_ylabel(ylabel)
        ax.set_ylim(top=max(ax.get_ylim()[1], top * 1.12))
        if title:
            ax.set_title(title)
        return _save(fig, path)


def regression_plot(xs, ys, fit, path, xlabel, ylabel, label_y="y", label_x="x", title=None):
    """Scatter of (xs, ys) with the fitted line and its equation."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    with mpl.rc_context(STYLE):
        fig, ax = _figure()
        ax.plot(xs, ys, "o", color=BAR_COLOR, markeredgecolor=LINE_COLOR, label="mean per multiplier")
        grid = np.linspace(xs.min(), xs.max(), 50)
        ax.plot(grid, fit.predict(grid), "-", color=LINE_COLOR, label=fit.equation(label_y, label_x))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        if title:
            ax.set_title(title)
        return _save(fig, path)

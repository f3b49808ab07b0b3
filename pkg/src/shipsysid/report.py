"""Figure rendering for training, evaluation, and study outputs.

Pure-object matplotlib (no pyplot, no global state): every function builds a
Figure; `save_figure` rasterizes it next to the CSV it illustrates.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .errors import DataError

_MEAN_STYLE = dict(color="#d62728", marker="_", s=400, linewidth=2.0, zorder=3)
_SEED_STYLE = dict(color="#1f77b4", alpha=0.65, s=28, zorder=2)


def comparison_figure(table) -> Figure:
    """Per-seed test losses and their mean for every dataset recipe."""
    fig = Figure(figsize=(1.6 + 1.1 * len(table.datasets), 4.2))
    ax = fig.subplots()
    xs = np.arange(len(table.datasets))
    for i in range(len(table.datasets)):
        ax.scatter(np.full(table.losses.shape[1], xs[i]), table.losses[i],
                   **_SEED_STYLE, label="per seed" if i == 0 else None)
    ax.scatter(xs, table.means, **_MEAN_STYLE, label="seed mean")
    ax.set_xticks(xs)
    ax.set_xticklabels(table.datasets, rotation=20, ha="right")
    ax.set_ylabel("mean test loss")
    if np.all(table.losses > 0):
        ax.set_yscale("log")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    ax.set_title("Test loss by training dataset")
    fig.subplots_adjust(bottom=0.24)
    return fig


def training_figure(record) -> Figure:
    """Validation loss, its EMA, and the selected checkpoint over epochs."""
    if not record.epochs:
        raise DataError("training record holds no epochs to plot")
    epochs = np.array([row.epoch for row in record.epochs])
    valid = np.array([row.valid_loss for row in record.epochs])
    ema = np.array([row.valid_ema for row in record.epochs])
    train = np.array([row.train_objective for row in record.epochs])

    fig = Figure(figsize=(7.0, 4.2))
    ax = fig.subplots()
    ax.plot(epochs, train, color="#999999", linewidth=0.9, label="train objective")
    ax.plot(epochs, valid, color="#1f77b4", linewidth=0.9, label="validation loss")
    ax.plot(epochs, ema, color="#ff7f0e", linewidth=1.6, label="validation EMA")
    ax.axvline(record.min_epoch, color="#2ca02c", linestyle="--", linewidth=1.0,
               label=f"selected epoch {record.min_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if np.all(valid > 0) and np.all(train > 0):
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    ax.set_title("Training progress")
    return fig


def error_series_figure(report) -> Figure:
    """Weighted error d(t) over the test windows, restarting at each boundary."""
    fig = Figure(figsize=(8.0, 3.6))
    ax = fig.subplots()
    for t_row, d_row in zip(report.t, report.errors):
        ax.plot(t_row, d_row, color="#1f77b4", linewidth=0.9)
        ax.axvline(t_row[0], color="#bbbbbb", linewidth=0.6, zorder=1)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("weighted error d(t)")
    ax.grid(True, alpha=0.3)
    label = report.dataset or report.method
    ax.set_title(f"Per-step error, {label}" if label else "Per-step error")
    return fig


def save_figure(fig: Figure, path) -> None:
    """Rasterize to ``path`` (PNG) with the Agg canvas."""
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120)

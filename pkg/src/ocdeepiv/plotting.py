"""Static figures for training runs.

Figures are drawn through matplotlib's object API on the Agg canvas, never
through pyplot, so repeated renders of the same data give identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# PNG metadata would otherwise embed the matplotlib version string
PNG_METADATA = {"Software": None}


def _figure(width=12, height=6):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    return path


def plot_theta(theta_true, theta_hat, theta_smooth, path, n_show=500):
    """Overlay the true, raw and smoothed effect curves for the first samples."""
    k = min(n_show, len(theta_true))
    idx = np.arange(k)
    fig, ax = _figure()
    ax.plot(idx, np.asarray(theta_true)[:k], label="True θ(x)", linewidth=2)
    ax.plot(idx, np.asarray(theta_hat)[:k], label="Estimated θ(x)", linewidth=1, alpha=0.5)
    ax.plot(idx, np.asarray(theta_smooth)[:k], label="Estimated θ(x), smoothed", linewidth=2)
    ax.set_title("True vs estimated CATE with smoothing")
    ax.set_xlabel("Sample index")
    ax.set_ylabel("θ(x)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_losses(epochs, total, mse, ortho, switch_epoch, path):
    """Loss curves on a log scale with the penalty switch marked.

    ``ortho`` may hold NaN for epochs before the switch.
    """
    epochs = np.asarray(epochs, dtype=float)
    fig, ax = _figure(10, 6)
    ax.plot(epochs, total, label="Total loss")
    ax.plot(epochs, mse, label="MSE loss")
    ortho = np.asarray(ortho, dtype=float)
    if np.any(np.isfinite(ortho)):
        ax.plot(epochs, ortho, label="Ortho loss")
    if switch_epoch is not None and 0 < switch_epoch < (epochs.max() if epochs.size else 0):
        ax.axvline(switch_epoch + 0.5, color="grey", linestyle="--", linewidth=1,
                   label=f"penalty on after epoch {switch_epoch}")
    if np.all(np.asarray(total) > 0):
        ax.set_yscale("log")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.set_title("Training losses")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)

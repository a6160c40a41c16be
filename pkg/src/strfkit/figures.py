"""SVG figure export (no display needed; Agg backend, data mirrored to CSV
by the CLI so plots can be regenerated elsewhere)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.cluster import hierarchy

from .modanalysis import DensityGrid


def population_figure(
    points,
    density: DensityGrid | None,
    path,
    title: str = "",
    delta_t: float | None = None,
    delta_f: float | None = None,
) -> None:
    """Scatter of (omega, Omega) with optional KDE contours and the
    low-modulation box edges."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    omega = np.array([m.omega for m in points])
    Omega = np.array([m.Omega for m in points])
    if density is not None:
        ax.contour(
            density.omega_axis,
            density.Omega_axis,
            density.values.T,
            levels=8,
            cmap="viridis",
            alpha=0.7,
        )
    ax.scatter(omega, Omega, s=22, c="crimson", edgecolors="black", zorder=3)
    if delta_t:
        ax.axvline(delta_t, color="gray", ls="--", lw=0.8)
        ax.axvline(-delta_t, color="gray", ls="--", lw=0.8)
    if delta_f:
        ax.axhline(delta_f, color="gray", ls="--", lw=0.8)
    ax.set_xlabel("temporal modulation $\\omega$ (Hz)")
    ax.set_ylabel("spectral modulation $\\Omega$ (cycles/octave)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def dendrogram_figure(linkage_table: np.ndarray, names, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(names) > 1:
        hierarchy.dendrogram(
            linkage_table, labels=list(names), ax=ax, color_threshold=0.0
        )
    ax.set_ylabel("merge height (Sinkhorn distance)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def metrics_figure(losses, accuracies, path, title: str = "") -> None:
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = np.arange(1, len(losses) + 1)
    ax1.plot(epochs, losses, "o-", color="tab:blue", label="loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(epochs, accuracies, "s-", color="tab:red", label="accuracy")
    ax2.set_ylabel("accuracy", color="tab:red")
    ax2.set_ylim(0, 1.05)
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

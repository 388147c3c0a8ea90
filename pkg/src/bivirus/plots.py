"""Figure rendering for simulation and sweep artifacts.

Figures go straight to files next to the CSV they visualize; nothing here
opens a window (the Agg backend is forced so headless runs work).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import Trajectory
from .experiments import SweepResult

_LABEL_COLORS = {
    "virus1_survival": "#1f77b4",
    "virus2_survival": "#d62728",
    "coexistence": "#9467bd",
    "healthy": "#7f7f7f",
    "undecided": "#bcbd22",
}


def plot_trajectory(traj: Trajectory, path, title: str | None = None, logx: bool = False) -> None:
    """Time evolution of all per-node infection fractions, both viruses."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = traj.times
    n = traj.n
    for idx in range(n):
        ax.plot(t, traj.states[:, idx], color="#1f77b4", alpha=0.6,
                lw=1.0, label="virus 1" if idx == 0 else None)
        ax.plot(t, traj.states[:, n + idx], color="#d62728", alpha=0.6,
                lw=1.0, label="virus 2" if idx == 0 else None)
    if logx:
        # Zero start time cannot sit on a log axis.
        ax.set_xscale("symlog", linthresh=max(t[1] if len(t) > 1 else 1e-3, 1e-6))
    ax.set_xlabel("t")
    ax.set_ylabel("infected fraction")
    ax.set_ylim(-0.02, 1.0)
    ax.legend(loc="best")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_phase_portrait(trajectories, path, equilibria=None, title: str | None = None) -> None:
    """(x_1, y_1) phase-plane curves for two-node runs, equilibria marked."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for name, traj in trajectories:
        ax.plot(traj.states[:, 0], traj.states[:, traj.n], lw=1.2, label=name)
        ax.plot(traj.states[0, 0], traj.states[0, traj.n], "o", ms=4, color="k")
    if equilibria:
        for eq in equilibria:
            ax.plot(eq.point.x[0], eq.point.y[0], "x", ms=9,
                    color=_LABEL_COLORS.get(eq.kind, "k"))
    ax.set_xlabel("x_1")
    ax.set_ylabel("y_1")
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(result: SweepResult, path, title: str | None = None) -> None:
    """Basin map: grid of initial states colored by the winning outcome."""
    order = sorted(result.counts)
    code = {label: i for i, label in enumerate(order)}
    img = np.vectorize(code.get)(result.labels)
    colors = [_LABEL_COLORS.get(label, "#333333") for label in order]
    cmap = matplotlib.colors.ListedColormap(colors)

    fig, ax = plt.subplots(figsize=(6, 5))
    # labels[i1, i2] has x1 along axis 0: put x1 on the horizontal axis.
    ax.pcolormesh(result.x1_values, result.x2_values, img.T, cmap=cmap,
                  vmin=-0.5, vmax=len(order) - 0.5, shading="nearest")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in colors]
    ax.legend(handles, order, loc="upper right", fontsize=8)
    ax.set_xlabel("x_1(0)")
    ax.set_ylabel("x_2(0)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

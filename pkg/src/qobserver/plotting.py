"""Headless figure rendering for the command line interface.

Figures are written straight to files with the Agg backend; nothing here
opens a window.  Kept separate from the CLI so the import cost is only paid
when a plot is requested.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .dynamics import Trajectory

__all__ = ["render_trajectory", "render_sweep"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def render_trajectory(traj: Trajectory,
                      extras: Sequence[tuple[str, np.ndarray]] = (),
                      path: str = "trajectory.png") -> None:
    """Two panels: mode mean quadratures, and derived magnitudes on a log
    scale (falls back to the mode magnitudes when no extras are given)."""
    plt = _pyplot()
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8.0, 6.0), sharex=True)
    m = traj.num_modes
    if traj.means is not None:
        for i in range(m):
            label = traj.labels[i] if i < len(traj.labels) else f"x{i + 1}"
            top.plot(traj.times, traj.means[:, i].real, label=f"Re {label}")
            top.plot(traj.times, traj.means[:, i].imag, "--", label=f"Im {label}")
    top.set_ylabel("mode means")
    top.legend(loc="upper right", fontsize="small")
    top.grid(True, alpha=0.3)
    curves = list(extras)
    if not curves and traj.means is not None:
        curves = [(traj.labels[i] if i < len(traj.labels) else f"x{i + 1}",
                   traj.means[:, i]) for i in range(m)]
    for name, series in curves:
        mag = np.maximum(np.abs(np.asarray(series)), 1e-18)
        bottom.semilogy(traj.times, mag, label=f"|{name}|")
    bottom.set_xlabel("t")
    bottom.set_ylabel("magnitude")
    bottom.legend(loc="upper right", fontsize="small")
    bottom.grid(True, alpha=0.3)
    title = traj.scenario or "trajectory"
    top.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep(param: str, values: np.ndarray, decay_rates: np.ndarray,
                 margins: np.ndarray, path: str = "sweep.png") -> None:
    """Error decay rate and stability margin against the swept parameter."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(values, decay_rates, "o-", label="error decay rate")
    ax.plot(values, -np.asarray(margins), "s--", label="slowest joint decay")
    ax.set_xlabel(param)
    ax.set_ylabel("rate")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Figure rendering for the CLI report paths.

Everything draws to files through the Agg backend; nothing here opens a
window. Each function returns the path it wrote.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .convergence import OrderMeasurement
from .onestep import Trajectory


def save_trajectory_figure(traj: Trajectory, path, title: str = "") -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    states = np.asarray(traj.states)
    if states.shape[1] <= 8:
        for k in range(states.shape[1]):
            ax.plot(traj.times, states[:, k], label=f"u_{k + 1}")
        ax.legend(loc="best", fontsize="small")
    else:
        # big systems: show the norm instead of a hairball
        ax.plot(traj.times, np.linalg.norm(states, axis=1), label="|u|_2")
        ax.legend(loc="best", fontsize="small")
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_convergence_figure(result: OrderMeasurement, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(result.hs, result.errors, "o-", label=result.method)
    p = int(round(result.slope)) if np.isfinite(result.slope) else 1
    if p >= 1 and np.all(result.errors > 0):
        ref = result.errors[-1] * (result.hs / result.hs[-1]) ** p
        ax.loglog(result.hs, ref, "k--", alpha=0.6, label=f"slope {p}")
    ax.set_xlabel("h")
    ax.set_ylabel("error at t_end")
    ax.set_title(f"measured order {result.slope:.3f}")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_region_figure(re: np.ndarray, im: np.ndarray, mag: np.ndarray,
                       path, title: str = "") -> Path:
    path = Path(path)
    res = np.unique(re)
    ims = np.unique(im)
    Z = np.asarray(mag, dtype=float).reshape(len(ims), len(res))
    Z = np.where(np.isfinite(Z), Z, np.nanmax(Z[np.isfinite(Z)]) * 10.0)
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.contourf(res, ims, Z, levels=[0.0, 1.0], colors=["#9ecae1"], alpha=0.8)
    ax.contour(res, ims, Z, levels=[1.0], colors="k", linewidths=1.2)
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.axvline(0.0, color="gray", lw=0.5)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title or "|R(z)| <= 1")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

"""Static SVG figures for plan and lap runs.

Everything is rendered through the Agg backend and saved as SVG with the
creation date stripped and the element-id hash salted by the config hash, so
rerunning the same configuration yields byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

__all__ = [
    "save_figure",
    "plot_plan",
    "plot_lap_trajectory",
    "plot_states",
]


def save_figure(fig, out_path, hashsalt: str) -> None:
    """Write a deterministic SVG and close the figure."""
    with plt.rc_context({"svg.hashsalt": hashsalt}):
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _draw_track(ax, track) -> None:
    s = track.s_grid
    cx = track.xs
    cy = track.ys
    theta = np.array([track.heading_at(float(si)) for si in s])
    nx, ny = -np.sin(theta), np.cos(theta)
    half = 0.5 * track.width
    ax.plot(cx + half * nx, cy + half * ny, color="k", lw=1.0)
    ax.plot(cx - half * nx, cy - half * ny, color="k", lw=1.0)
    ax.plot(cx, cy, color="0.6", lw=0.6, ls="--")


def plot_plan(track, path, explored, out_path, hashsalt: str) -> None:
    """Track boundaries, explored branches (grey), chosen path (red)."""
    fig, ax = plt.subplots(figsize=(9, 7))
    _draw_track(ax, track)
    segs = [node.pose_samples[:, :2] for node in explored
            if node.pose_samples is not None and node.k > 0]
    if segs:
        ax.add_collection(LineCollection(segs, colors="0.75", linewidths=0.3))
    for node in path:
        if node.pose_samples is not None and node.k > 0:
            ax.plot(node.pose_samples[:, 0], node.pose_samples[:, 1],
                    color="tab:red", lw=1.8)
    root = path[0].state
    ax.plot(root.pose.x, root.pose.y, marker="o", color="tab:red", ms=5)
    ax.set_aspect("equal", "datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("planned trajectory, %d explored nodes" % len(explored))
    ax.grid(True, alpha=0.3)
    save_figure(fig, out_path, hashsalt)


def plot_lap_trajectory(track, xs, ys, out_path, hashsalt: str) -> None:
    fig, ax = plt.subplots(figsize=(9, 7))
    _draw_track(ax, track)
    ax.plot(xs, ys, color="tab:red", lw=1.2)
    ax.plot(xs[0], ys[0], marker="o", color="tab:red", ms=5)
    ax.set_aspect("equal", "datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("executed trajectory")
    ax.grid(True, alpha=0.3)
    save_figure(fig, out_path, hashsalt)


def plot_states(t, series: dict, out_path, hashsalt: str) -> None:
    """Stacked time histories; series maps label -> array."""
    fig, axes = plt.subplots(len(series), 1, figsize=(9, 2.0 * len(series)),
                             sharex=True)
    if len(series) == 1:
        axes = [axes]
    for ax, (label, values) in zip(axes, series.items()):
        ax.plot(t, values, lw=0.9)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("t [s]")
    fig.align_ylabels(axes)
    fig.tight_layout()
    save_figure(fig, out_path, hashsalt)

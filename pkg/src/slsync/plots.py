"""SVG emission for sweep results.

One-axis sweeps become line plots, two-axis sweeps become line families
or heatmaps depending on grid density, deeper sweeps are sliced along
the extra axes. Cosmetics are unconstrained; the hashsalt and stripped
date metadata keep repeated runs byte-stable for a given seed.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .sweep import SweepResult

MAX_SLICES = 6


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _rows_as_grid(result: SweepResult):
    names = result.spec.axis_names
    grids = [list(vals) for _, vals in result.spec.axes]
    shape = tuple(len(g) for g in grids)
    f = result.column("F").reshape(shape)
    s0 = result.column("S0_abs").reshape(shape)
    s_hd = result.column("S_HD_abs").reshape(shape)
    return names, grids, f, s0, s_hd


def _line_plot(ax, x, series, labels, ylabel, xlabel):
    for y, label in zip(series, labels):
        ax.plot(x, y, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if labels and labels[0]:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)


def _heatmap(ax, fig, xg, yg, z, xlabel, ylabel, title):
    mesh = ax.pcolormesh(xg, yg, z.T, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=9)


def plot_sweep(result: SweepResult, out_dir: Path, name: str, seed: int = 0) -> list[Path]:
    """Write <name>_F.svg and <name>_S.svg; returns the written paths."""
    matplotlib.rcParams["svg.hashsalt"] = str(seed)
    names, grids, f, s0, s_hd = _rows_as_grid(result)
    written = []
    out_dir = Path(out_dir)

    def emit(fig, suffix):
        path = out_dir / f"{name}_{suffix}.svg"
        _save(fig, path)
        written.append(path)

    if len(names) == 1:
        x = grids[0]
        fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
        _line_plot(ax, x, [f], [""], "F", names[0])
        emit(fig, "F")
        fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
        ax.plot(x, s0, "o--", label="|S0|")
        ax.plot(x, s_hd, "o-", label="|S_HD|")
        ax.set_xlabel(names[0])
        ax.set_ylabel("|S|")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
        emit(fig, "S")
        return written

    if len(names) == 2:
        dense = len(grids[0]) >= 4 and len(grids[1]) >= 4
        if dense:
            fig, ax = plt.subplots(figsize=(5, 4), constrained_layout=True)
            _heatmap(ax, fig, grids[0], grids[1], f, names[0], names[1], "F")
            emit(fig, "F")
            fig, ax = plt.subplots(figsize=(5, 4), constrained_layout=True)
            _heatmap(ax, fig, grids[0], grids[1], s_hd, names[0], names[1], "|S_HD|")
            emit(fig, "S")
        else:
            labels = [f"{names[1]}={v:g}" for v in grids[1]]
            fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
            _line_plot(ax, grids[0], f.T, labels, "F", names[0])
            emit(fig, "F")
            fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
            for j, label in enumerate(labels):
                line = ax.plot(grids[0], s_hd[:, j], "o-", label=f"|S_HD| {label}")
                ax.plot(grids[0], s0[:, j], "--", color=line[0].get_color(),
                        label=f"|S0| {label}")
            ax.set_xlabel(names[0])
            ax.set_ylabel("|S|")
            ax.legend(fontsize=7)
            ax.grid(True, alpha=0.3)
            emit(fig, "S")
        return written

    # 3+ axes: slice along the first axis (bounded fan-out)
    for i, v in enumerate(grids[0][:MAX_SLICES]):
        sliced = f[i]
        fig, ax = plt.subplots(figsize=(5, 4), constrained_layout=True)
        if len(grids[1]) >= 4 and len(grids[2]) >= 4:
            _heatmap(ax, fig, grids[1], grids[2], sliced, names[1], names[2],
                     f"F at {names[0]}={v:g}")
        else:
            labels = [f"{names[1]}={w:g}" for w in grids[1]]
            _line_plot(ax, grids[2], sliced, labels, "F", names[2])
            ax.set_title(f"{names[0]}={v:g}", fontsize=9)
        emit(fig, f"F_{names[0]}_{i}")
    return written

"""SVG figure emission for line plots and field heatmaps.

Rendering is headless and deterministic: the Agg backend, a fixed
element-id hash salt, and no date metadata mean the same data always
produces the same bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
from matplotlib.colors import LogNorm  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["line_plot", "heatmap"]

_SVG_OPTS = {"metadata": {"Date": None}}


def _new_figure():
    plt.rcParams["svg.hashsalt"] = "spherescope"
    return plt.subplots(figsize=(6.0, 4.0), dpi=100)


def line_plot(path, series, xlabel: str, ylabel: str, title: str = "",
              logy: bool = False) -> None:
    """Write one or more labelled curves to an SVG file.

    Args:
        series: Iterable of ``(x, y, label)`` triples; empty labels are
            left out of the legend.
    """
    fig, ax = _new_figure()
    try:
        labelled = False
        for x, y, label in series:
            ax.plot(x, y, label=label or None, linewidth=1.2)
            labelled = labelled or bool(label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if labelled:
            ax.legend(frameon=False)
        ax.grid(True, alpha=0.3)
        fig.savefig(path, format="svg", **_SVG_OPTS)
    finally:
        plt.close(fig)


def heatmap(path, values: np.ndarray, extent, xlabel: str, ylabel: str,
            cbar_label: str = "", title: str = "", log: bool = False) -> None:
    """Write a 2-D field to an SVG heatmap.

    Args:
        values: Array with row 0 at the bottom of the plot.
        extent: ``(x_min, x_max, y_min, y_max)`` axis limits.
        log: Use a logarithmic colour scale; non-positive entries are
            clipped to the smallest positive value present.
    """
    values = np.asarray(values, dtype=float)
    norm = None
    if log:
        positive = values[values > 0]
        if positive.size == 0:
            raise ValueError("log colour scale needs at least one positive value")
        floor = float(positive.min())
        values = np.clip(values, floor, None)
        norm = LogNorm(vmin=floor, vmax=float(values.max()))
    fig, ax = _new_figure()
    try:
        image = ax.imshow(values, origin="lower", extent=extent, norm=norm,
                          aspect="equal", cmap="inferno", interpolation="nearest")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        cbar = fig.colorbar(image, ax=ax)
        if cbar_label:
            cbar.set_label(cbar_label)
        fig.savefig(path, format="svg", **_SVG_OPTS)
    finally:
        plt.close(fig)

"""Figure rendering for run reports (PNG via the non-interactive Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.5,
    "legend.fontsize": 9,
    "legend.frameon": False,
    "figure.figsize": (6.0, 3.8),
    "savefig.dpi": 120,
}


def line_figure(path, x, series: dict, xlabel="t", ylabel="", title="", styles=None):
    """One panel with a line per entry of ``series``; ``styles`` maps labels to plot kwargs."""
    styles = styles or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, np.asarray(y), label=label, **styles.get(label, {}))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        ax.grid(alpha=0.3, linewidth=0.5)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path


def bar_figure(path, labels, values, ylabel="", title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(np.arange(len(values)), values, tick_label=[str(v) for v in labels])
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(axis="y", alpha=0.3, linewidth=0.5)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path

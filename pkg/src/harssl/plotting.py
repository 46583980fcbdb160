"""Report figures. Uses the non-interactive Agg backend."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 9,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "savefig.dpi": 150,
}
AXIS_COLORS = ("#e41a1c", "#377eb8", "#4daf4a")


def figure(width=4.5, height=None, nrows=1, ncols=1, **kw):
    if height is None:
        height = width * (math.sqrt(5) - 1) / 2 * nrows / ncols
    with plt.rc_context(RC):
        return plt.subplots(nrows, ncols, figsize=(width, height), **kw)


def save_figure(fig, path) -> Path:
    path = Path(path)
    # no timestamp/software metadata, so reruns write identical files
    metadata = {"Software": None} if path.suffix == ".png" else {"CreationDate": None}
    with plt.rc_context(RC):
        fig.savefig(path, bbox_inches="tight", metadata=metadata)
    plt.close(fig)
    return path


def confusion_figure(report, normalize: bool = True):
    c = np.asarray(report.confusion, dtype=np.float64)
    shown = c / np.maximum(c.sum(axis=1, keepdims=True), 1) if normalize else c
    k = len(report.class_names)
    fig, ax = figure(width=1.2 + 0.55 * k, height=1.0 + 0.5 * k)
    with plt.rc_context(RC):
        im = ax.imshow(shown, cmap="Blues", vmin=0, vmax=1 if normalize else None)
        ax.set_xticks(range(k), report.class_names, rotation=45, ha="right")
        ax.set_yticks(range(k), report.class_names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("truth")
        ax.set_title(f"accuracy {report.accuracy:.3f}, kappa {report.kappa:.3f}")
        for i in range(k):
            for j in range(k):
                ax.text(j, i, f"{int(c[i, j])}", ha="center", va="center", fontsize=6,
                        color="white" if shown[i, j] > 0.6 * (shown.max() or 1) else "black")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    return fig


def loss_curve_figure(history: Sequence[tuple[int, float, float]]):
    fig, ax = figure()
    with plt.rc_context(RC):
        steps = [h[0] for h in history]
        ax.plot(steps, [h[1] for h in history], marker="o", markersize=2)
        ax.axhline(math.log(2), color="grey", linestyle=":", label="ln 2")
        ax.set_xlabel("step")
        ax.set_ylabel("weighted pair loss")
        ax.legend(frameon=False)
    return fig


def augmentation_figure(window, specs, rng):
    """Original window next to one draw of each augmentation."""
    from .augment import apply

    panels = [("original", window.samples)] + [(s.label, apply(s, window, rng).samples) for s in specs]
    fig, axes = figure(width=6.5, height=1.1 * len(panels), nrows=len(panels), sharex=True)
    axes = np.atleast_1d(axes)
    t = np.arange(window.samples.shape[0]) / 30.0
    with plt.rc_context(RC):
        for ax, (title, x) in zip(axes, panels):
            for k in range(3):
                ax.plot(t, x[:, k], color=AXIS_COLORS[k], label="xyz"[k])
            ax.set_ylabel(title, rotation=0, ha="right", va="center")
        axes[0].legend(ncol=3, frameon=False, loc="upper right")
        axes[-1].set_xlabel("time (s)")
    return fig

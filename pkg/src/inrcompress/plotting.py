"""Figures for the verify, compress and zoo reports.

Everything renders through the Agg backend straight to PNG files, so no
display is needed.  PNG metadata is pinned for byte-stable output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import qq_line, qq_points  # noqa: E402

_PNG_META = {"Software": None}
_STYLE = {
    "font.size": 9.0,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def qq_figure(samples, path, title: str = "") -> Path:
    """Normal Q-Q plot of ``samples`` with the least-squares line."""
    pts = qq_points(samples)
    slope, intercept = qq_line(pts)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        ax.plot(pts[:, 0], pts[:, 1], ".", ms=2, color="tab:blue")
        xs = np.array([pts[0, 0], pts[-1, 0]])
        ax.plot(xs, slope * xs + intercept, "-", color="tab:red", lw=1,
                label=f"slope {slope:.3f}, intercept {intercept:.3g}")
        ax.set_xlabel("standard normal quantile")
        ax.set_ylabel("sample quantile")
        ax.set_title(title)
        ax.legend(loc="upper left")
        fig.tight_layout()
    return _save(fig, path)


def histogram_figure(original, reconstructed, path, title: str = "", bins: int = 100) -> Path:
    """Overlaid value histograms of a tensor and its reconstruction."""
    original = np.asarray(original, dtype=np.float64).reshape(-1)
    reconstructed = np.asarray(reconstructed, dtype=np.float64).reshape(-1)
    lo = min(original.min(), reconstructed.min())
    hi = max(original.max(), reconstructed.max())
    edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.hist(original, bins=edges, histtype="step", color="k", label="original")
        ax.hist(reconstructed, bins=edges, histtype="step", color="tab:orange", label="reconstructed")
        ax.set_yscale("log")
        ax.set_xlabel("weight value")
        ax.set_ylabel("count")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
    return _save(fig, path)


def loss_figure(histories: dict, path) -> Path:
    """Per-layer training curves: total loss and its MSE term."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        for name, hist in histories.items():
            epochs = np.arange(len(hist["total"]))
            line, = ax.plot(epochs, hist["total"], lw=1, label=f"{name} total")
            ax.plot(epochs, hist["mse"], lw=1, ls="--", color=line.get_color(), label=f"{name} mse")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(fontsize=7)
        fig.tight_layout()
    return _save(fig, path)


def zoo_figure(rows, path) -> Path:
    """Measured value over bound for each check; bars right of 1 fail."""
    labels = [f"{r.case}: {r.check}" for r in rows]
    ratios = []
    for r in rows:
        if r.bound > 0:
            ratios.append(max(r.measured / r.bound, 1e-17))
        else:
            ratios.append(1e-17 if r.measured <= r.bound else 10.0)
    colors = ["tab:green" if r.passed else "tab:red" for r in rows]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 0.25 * len(rows) + 1.0))
        y = np.arange(len(rows))
        ax.barh(y, ratios, color=colors)
        ax.axvline(1.0, color="k", lw=0.8)
        ax.set_xscale("log")
        ax.set_yticks(y)
        ax.set_yticklabels(labels, fontsize=6)
        ax.invert_yaxis()
        ax.set_xlabel("measured / bound")
        fig.tight_layout()
    return _save(fig, path)

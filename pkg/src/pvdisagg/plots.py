"""Figure rendering for CLI report paths.

All functions write a PNG next to the delimited outputs and return the
path.  The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .disagg import PredictionEnvelope  # noqa: E402
from .spatialgp import CovMatrix  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_series(path, named_series, title: str, ylabel: str):
    """Overlay one or more uniform series against elapsed time."""
    fig, ax = plt.subplots(figsize=(8, 4))
    for label, series in named_series.items():
        t = series.times() - next(iter(named_series.values())).start_time
        ax.plot(t, series.values, label=label, linewidth=0.9)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(named_series) > 1:
        ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_envelope(path, envelope: PredictionEnvelope, truth=None,
                  title: str = "prediction envelope"):
    """Mean path with its deviation band, optionally against the truth."""
    fig, ax = plt.subplots(figsize=(8, 4))
    t0 = envelope.mean_path.start_time
    t = envelope.mean_path.times() - t0
    ax.fill_between(t, envelope.lower.values, envelope.upper.values,
                    alpha=0.3, label="band")
    ax.plot(t, envelope.mean_path.values, label="mean", linewidth=1.2)
    if truth is not None:
        ax.plot(t, truth.values, label="truth", linewidth=0.9,
                linestyle="--", color="black")
    ax.set_xlabel("time since forecast start [s]")
    ax.set_ylabel("power [W]")
    ax.set_title(f"{title} ({envelope.n_realizations} realizations)")
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_cov_matrix(path, cov: CovMatrix, title: str = "covariance"):
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(cov.matrix, cmap="viridis")
    n = cov.n_sites
    step = max(1, n // 8)
    ticks = np.arange(0, n, step)
    ax.set_xticks(ticks)
    ax.set_yticks(ticks)
    ax.set_xticklabels([cov.site_ids[i] for i in ticks], rotation=90,
                       fontsize="x-small")
    ax.set_yticklabels([cov.site_ids[i] for i in ticks], fontsize="x-small")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _finish(fig, path)


def plot_trace(path, trace, title: str = "objective trace"):
    """Accepted objective values of a derivative-free fit, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    values = np.asarray(trace, dtype=float)
    ax.plot(np.arange(len(values)), values, marker=".", linewidth=0.9)
    if np.all(values > 0):
        ax.set_yscale("log")
    ax.set_xlabel("accepted step")
    ax.set_ylabel("objective")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_jumps(path, series, jumps, title: str = "jumps"):
    """Series with detected or injected jumps marked."""
    fig, ax = plt.subplots(figsize=(8, 4))
    t = series.times() - series.start_time
    ax.plot(t, series.values, linewidth=0.9)
    for j in jumps:
        if 0 <= j.index < len(series):
            ax.axvline(t[j.index], color="red", alpha=0.5, linewidth=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("power [W]")
    ax.set_title(f"{title} ({len(jumps)} marked)")
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)

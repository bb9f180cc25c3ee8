"""Figures written next to the CSV/JSON reports (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .rescale import DemixFilterBank  # noqa: E402
from .signal_io import TimeSeries  # noqa: E402
from .stats import display_envelope  # noqa: E402


def plot_envelopes(groups: dict, path, title: str | None = None) -> Path:
    """One row per named two-channel series, one column per channel.

    ``groups`` maps a label (e.g. ``"mixtures"``) to a :class:`TimeSeries`.
    Each panel shows the low-pass envelope normalized to unit peak.
    """
    path = Path(path)
    rows = len(groups)
    fig, axes = plt.subplots(rows, 2, figsize=(10, 1.8 * rows + 0.6), sharex=True, squeeze=False)
    for r, (label, series) in enumerate(groups.items()):
        t = np.arange(len(series)) / series.sample_rate
        for c in range(min(2, series.n_channels)):
            env = display_envelope(series.channels[c], series.sample_rate)
            ax = axes[r, c]
            ax.plot(t, env, lw=0.7)
            ax.set_ylim(0, 1.05)
            ax.set_ylabel(f"{label} {c + 1}", fontsize=8)
    for ax in axes[-1]:
        ax.set_xlabel("time (s)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_filters(bank: DemixFilterBank, path, title: str | None = None) -> Path:
    """Impulse responses ``h_ij(tau)`` of a demixing filter bank."""
    path = Path(path)
    n = bank.n
    fig, axes = plt.subplots(n, n, figsize=(4 * n, 2.4 * n), sharex=True, squeeze=False)
    tau = np.arange(bank.T)
    for i in range(n):
        for j in range(n):
            ax = axes[i, j]
            ax.plot(tau, bank.h[i, j], lw=0.7)
            ax.set_title(f"h{i + 1}{j + 1}", fontsize=9)
        axes[i, 0].set_ylabel(f"tail {bank.support[i]:.3f}", fontsize=8)
    for ax in axes[-1]:
        ax.set_xlabel("tau (samples)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def report_figures(stem, mixtures: TimeSeries, separated: TimeSeries, bank: DemixFilterBank | None = None,
                   sources: TimeSeries | None = None) -> list:
    """Envelope figure and, when a bank is given, a filter figure for one report stem."""
    stem = Path(stem)
    groups = {}
    if sources is not None:
        groups["source"] = sources
    groups["mixture"] = mixtures
    groups["separated"] = separated
    paths = [plot_envelopes(groups, stem.with_name(stem.name + "_envelopes.png"))]
    if bank is not None:
        paths.append(plot_filters(bank, stem.with_name(stem.name + "_filters.png")))
    return paths

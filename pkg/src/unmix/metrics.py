"""Separation quality by maximal lagged correlation between channel pairs."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .signal_io import TimeSeries
from .stats import rho_maxlag

log = logging.getLogger(__name__)

CSV_FIELDS = ("rho_bar_mixtures", "rho_bar_separated", "rho_bar_sources", "ratio_1", "ratio_2", "K2")


@dataclass
class EvalReport:
    rho_bar_mixtures: float
    rho_bar_separated: float
    rho_bar_sources: float | None = None
    ratios: list | None = None  # [rho(x1,s1)/rho(x1,s2), rho(x2,s1)/rho(x2,s2)]
    matching: list | None = None  # separated channel matched to source 1, then source 2
    K2: int = 20
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(**doc)


def amari_index(G) -> float:
    """Amari-style index of a gain matrix ``G = Hhat^-1 H``, in ``[0, 1]``.

    Zero exactly when ``G`` is a scaled permutation matrix.
    """
    A = np.abs(np.asarray(G))
    n = A.shape[0]
    rows = np.sum(A / A.max(axis=1, keepdims=True), axis=1) - 1
    cols = np.sum(A / A.max(axis=0, keepdims=True), axis=0) - 1
    return float((rows.sum() + cols.sum()) / (2 * n * (n - 1)))


def rho_bar(a, b, K2: int = 20) -> float:
    return rho_maxlag(a, b, K2)


def _pair(series: TimeSeries, length: int):
    if series.n_channels < 2:
        raise ValueError(f"need 2 channels, got {series.n_channels}")
    return series.channels[0, :length], series.channels[1, :length]


def evaluate(separated: TimeSeries, mixtures: TimeSeries, sources: TimeSeries | None = None,
             K2: int = 20, metadata: dict | None = None) -> EvalReport:
    """Correlation report in the shape of the published tables.

    Separated channels are matched to sources by maximal correlation, so
    ``ratios[0]`` belongs to the output closest to source 1 and should exceed
    one, while ``ratios[1]`` should fall below one.
    """
    lengths = [len(separated), len(mixtures)] + ([len(sources)] if sources is not None else [])
    L = min(lengths)
    if len(set(lengths)) > 1:
        log.info("trimming evaluation signals to %d samples", L)
    sep = _pair(separated, L)
    mix = _pair(mixtures, L)
    report = EvalReport(rho_bar(*mix, K2), rho_bar(*sep, K2), K2=K2, metadata=dict(metadata or {}))
    if sources is not None:
        src = _pair(sources, L)
        report.rho_bar_sources = rho_bar(*src, K2)
        m = np.array([[rho_bar(x, s, K2) for s in src] for x in sep])
        straight = m[0, 0] + m[1, 1]
        swapped = m[0, 1] + m[1, 0]
        order = [0, 1] if straight >= swapped else [1, 0]
        report.matching = order
        report.ratios = [float(m[order[0], 0] / m[order[0], 1]),
                         float(m[order[1], 0] / m[order[1], 1])]
    return report


def write_report(report: EvalReport, path) -> tuple:
    """Write a one-row CSV and a JSON twin (same stem, ``.json``)."""
    path = Path(path)
    csv_path = path if path.suffix == ".csv" else path.with_suffix(".csv")
    json_path = csv_path.with_suffix(".json")
    ratios = report.ratios or [None, None]
    row = [report.rho_bar_mixtures, report.rho_bar_separated, report.rho_bar_sources,
           ratios[0], ratios[1]]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        writer.writerow(["" if v is None else f"{v:.8g}" for v in row] + [report.K2])
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return csv_path, json_path


def read_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).with_suffix(".json").read_text()))

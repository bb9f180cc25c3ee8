"""Batch and dynamic (sliding-window) separation of two-channel mixtures.

A window of ``nT`` frames is turned into per-bin moment sums, per-bin mixing
estimates, a frequency permutation plan and a compact real filter bank. The
dynamic loop slides the window by ``dnT`` frames, re-solves, aligns the new
filters to the emitted output on the last ``DnT`` frames, enforces the
``max |h_ii|`` invariance and appends only the new samples.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .align import AlignmentError, align_bins, select_reference, separation_quality, time_permutation
from .config import SeparationConfig
from .jade import RankDeficientError, estimate_mixing
from .rescale import (
    DemixFilterBank,
    build_filter_bank,
    continuity_normalize,
    demix_span,
    solve_scaling,
    support_metric,
)
from .signal_io import TimeSeries
from .spectral import frame_hop, half_spectrum, hermitian_extend, make_frames
from .stats import MomentSums, accumulate, cumulants, slide_update

log = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    pass


class DegenerateStatisticsError(ValueError):
    """Every frequency bin has singular statistics (e.g. a silent input)."""


@dataclass
class WindowSolution:
    Hinv: np.ndarray  # (T/2+1, n, n), rows permuted per plan
    bank: DemixFilterBank
    reference_bin: int
    C_ref: float
    margins: np.ndarray
    degenerate: np.ndarray
    residuals: list
    baselines: list
    poorly_identified: int


@dataclass
class SeparationState:
    frame_start: int
    sums: MomentSums
    bank: DemixFilterBank
    reference_max: np.ndarray
    sample_rate: float
    chunks: list = field(default_factory=list)
    emitted: int = 0
    k: int = 0
    diagnostics: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return np.concatenate(self.chunks, axis=1)


@dataclass
class SeparationResult:
    output: TimeSeries
    bank: DemixFilterBank
    diagnostics: list
    state: SeparationState | None = None


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("UNMIX_THREADS", "1")))
    except ValueError:
        return 1


def num_frames(length: int, cfg: SeparationConfig) -> int:
    hop = frame_hop(cfg.T, cfg.overlap)
    return 0 if length < cfg.T else (length - cfg.T) // hop + 1


def window_spectra(x: np.ndarray, cfg: SeparationConfig, first: int, count: int) -> np.ndarray:
    """Half spectra of frames ``first .. first+count-1``, shape ``(T/2+1, count, n)``."""
    hop = cfg.hop
    start = first * hop
    stop = (first + count - 1) * hop + cfg.T
    _, frames = make_frames(x[:, start:stop], cfg.T, cfg.overlap)
    return np.transpose(half_spectrum(frames), (2, 1, 0))


def _estimate_one(c):
    try:
        est = estimate_mixing(c)
    except RankDeficientError:
        return None, None
    return np.linalg.inv(est.H), est.diagnostics


def _estimate_bins(sums: MomentSums, T: int):
    c_all = cumulants(sums)
    nb = T // 2 + 1
    items = [c_all[b] for b in range(nb)]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_estimate_one, items))
    else:
        results = [_estimate_one(c) for c in items]
    Hinv = np.zeros((nb, 2, 2), dtype=complex)
    degenerate = np.zeros(nb, dtype=bool)
    poor = 0
    for b, (Hi, diag) in enumerate(results):
        if Hi is None:
            degenerate[b] = True
            Hinv[b] = np.eye(2)
            continue
        Hinv[b] = Hi
        poor += bool(diag["poorly_identified"])
    Hinv[0] = Hinv[0].real
    Hinv[-1] = Hinv[-1].real
    return Hinv, degenerate, poor


def solve_window(X: np.ndarray, sums: MomentSums, cfg: SeparationConfig) -> WindowSolution:
    """Steps I-III on one statistics window.

    ``X`` holds the window's half spectra, shape ``(T/2+1, M, 2)``.
    """
    T = cfg.T
    Hinv, degenerate, poor = _estimate_bins(sums, T)
    if degenerate.all():
        raise DegenerateStatisticsError("mixture statistics are singular in every frequency bin")
    if degenerate.any():
        log.info("%d degenerate bins use the identity demixer", int(degenerate.sum()))

    amps = np.abs(np.einsum("bij,btj->bit", Hinv, X))
    sortable = ~degenerate
    lo, hi = cfg.bin_range
    C = np.full(len(amps), np.nan)
    if cfg.reference.upper() == "A":
        C[lo : hi + 1] = separation_quality(amps[lo : hi + 1], cfg.K0, cfg.lag_agg)
        C[~sortable] = np.nan
        ref = select_reference(C, "A", lo, hi)
    else:
        ref = select_reference(C, "B")
        if not sortable[ref]:
            raise AlignmentError(f"fixed reference bin {ref} is degenerate")
        C[ref] = separation_quality(amps[ref], cfg.K0, cfg.lag_agg)

    plan = align_bins(amps, ref, cfg.K0, cfg.lag_agg, sortable)
    aligned = np.stack([Hinv[b][list(s)] for b, s in enumerate(plan.sigmas)])

    full = hermitian_extend(aligned, T)
    sols = [solve_scaling(full[:, i, :], cfg.beta, cfg.q, fixed=degenerate) for i in range(2)]
    bank = build_filter_bank(full, sols)
    margins = plan.margins[np.isfinite(plan.margins) & plan.sortable]
    return WindowSolution(
        aligned, bank, ref, float(C[ref]), margins, degenerate,
        [s.residual for s in sols], [s.baseline for s in sols], poor,
    )


def _record(k, first, cfg, sol: WindowSolution, **extra):
    m = sol.margins
    rec = {
        "update": k,
        "window_frames": [first, first + cfg.nT],
        "reference_bin": sol.reference_bin,
        "C_ref": sol.C_ref,
        "sort_margin_min": float(m.min()) if m.size else None,
        "sort_margin_median": float(np.median(m)) if m.size else None,
        "degenerate_bins": int(sol.degenerate.sum()),
        "poorly_identified_bins": sol.poorly_identified,
        "wls_residual": sol.residuals,
        "wls_baseline": sol.baselines,
    }
    rec.update(extra)
    return rec


def _check_input(mix: TimeSeries):
    if mix.n_channels != 2:
        raise ValueError(f"need 2 channels, got {mix.n_channels}")


def init_state(mix: TimeSeries, cfg: SeparationConfig) -> SeparationState:
    """Step I-III on the first ``nT`` frames and emission of their samples."""
    _check_input(mix)
    x = mix.channels
    if num_frames(len(mix), cfg) < cfg.nT:
        raise InsufficientDataError(
            f"mixture holds {num_frames(len(mix), cfg)} frames, need nT={cfg.nT}"
        )
    X = window_spectra(x, cfg, 0, cfg.nT)
    sums = accumulate(X)
    sol = solve_window(X, sums, cfg)
    end = (cfg.nT - 1) * cfg.hop + cfg.T
    out = demix_span(x, sol.bank, 0, end)
    state = SeparationState(0, sums, sol.bank, sol.bank.max_diag(), mix.sample_rate,
                            [out], end, 0)
    state.diagnostics.append(_record(0, 0, cfg, sol, support=sol.bank.support.tolist(),
                                     emitted=end))
    return state


def step_update(state: SeparationState, mix: TimeSeries, cfg: SeparationConfig) -> SeparationState:
    """Slide the window by ``dnT`` frames and append the newly separated samples."""
    x = mix.channels
    s = state.frame_start
    first = s + cfg.dnT
    if first + cfg.nT > num_frames(len(mix), cfg):
        raise InsufficientDataError("not enough new frames for an update")
    remove = window_spectra(x, cfg, s, cfg.dnT)
    add = window_spectra(x, cfg, s + cfg.nT, cfg.dnT)
    sums = slide_update(state.sums, remove, add)
    X = window_spectra(x, cfg, first, cfg.nT)
    sol = solve_window(X, sums, cfg)

    e = state.emitted
    e_new = (first + cfg.nT - 1) * cfg.hop + cfg.T
    ov = e - cfg.DnT * cfg.hop
    cand = demix_span(x, sol.bank, ov, e)
    prev = state.output[:, ov:e]
    ta = time_permutation(prev, cand, cfg.K1, cfg.lag_agg)
    if not ta.margin > 0.05:
        log.warning("update %d: low-confidence time alignment (margin %.3g)", state.k + 1, ta.margin)
    h = sol.bank.h[list(ta.sigma)]
    permuted = DemixFilterBank(h, cfg.T, support_metric(h))
    bank = continuity_normalize(permuted, state.bank, ta.signs)
    new = demix_span(x, bank, e, e_new)

    state.chunks.append(new)
    state.frame_start = first
    state.sums = sums
    state.bank = bank
    state.emitted = e_new
    state.k += 1
    state.diagnostics.append(_record(
        state.k, first, cfg, sol,
        support=bank.support.tolist(),
        time_sigma=list(ta.sigma),
        time_signs=ta.signs.tolist(),
        time_margin=ta.margin,
        max_h_ii=bank.max_diag().tolist(),
        emitted=e_new,
    ))
    return state


def separate_dynamic(mix: TimeSeries, cfg: SeparationConfig) -> SeparationResult:
    state = init_state(mix, cfg)
    total = num_frames(len(mix), cfg)
    while state.frame_start + cfg.dnT + cfg.nT <= total:
        step_update(state, mix, cfg)
    out = TimeSeries(state.output, mix.sample_rate)
    return SeparationResult(out, state.bank, state.diagnostics, state)


def separate_batch(mix: TimeSeries, cfg: SeparationConfig) -> SeparationResult:
    """Steps I-III once over the statistics of the whole signal."""
    _check_input(mix)
    total = num_frames(len(mix), cfg)
    if total < cfg.batch_nT:
        raise InsufficientDataError(f"mixture holds {total} frames, batch mode needs {cfg.batch_nT}")
    X = window_spectra(mix.channels, cfg, 0, total)
    sol = solve_window(X, accumulate(X), cfg)
    out = demix_span(mix.channels, sol.bank, 0, len(mix))
    rec = _record(0, 0, cfg, sol, support=sol.bank.support.tolist(), emitted=len(mix))
    rec["window_frames"] = [0, total]
    return SeparationResult(TimeSeries(out, mix.sample_rate), sol.bank, [rec])


def write_diagnostics(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

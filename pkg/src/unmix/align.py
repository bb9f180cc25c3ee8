"""Permutation alignment across frequency bins and across dynamic updates.

Both problems maximize an l1 x l-inf score: the sum over channels of the
largest absolute correlation coefficient over a range of time lags. Raw
magnitudes are correlated directly; smoothed envelopes are never used.

A permutation ``sigma`` is a tuple where output channel ``i`` takes candidate
channel ``sigma[i]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .stats import aggregate_lags, lagged_rho

REFERENCE_BIN_B = 4


class AlignmentError(ValueError):
    pass


@dataclass
class PermutationResult:
    sigma: tuple
    margin: float
    objectives: dict
    confident: bool = True


@dataclass
class TimeAlignment:
    sigma: tuple
    signs: np.ndarray
    margin: float
    objective: float


@dataclass
class PermutationPlan:
    reference_bin: int
    sigmas: list
    margins: np.ndarray
    C: np.ndarray
    sortable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _pair_scores(ref, cand, K, agg):
    """``S[..., i, j] = agg_k |rho(ref_i(t), cand_j(t - k))|``; NaN if undefined."""
    ref = np.asarray(ref, dtype=float)
    cand = np.asarray(cand, dtype=float)
    n = ref.shape[-2]
    r = lagged_rho(ref[..., :, None, :], cand[..., None, :, :], K)
    # lag set is symmetric, so t - k and t + k scan the same values
    return aggregate_lags(r, agg).reshape(ref.shape[:-2] + (n, n))


def separation_quality(amps, K0: int, agg: str = "max") -> np.ndarray:
    """``C = sum_{i != j} agg_k |rho(|s_i(t)|, |s_j(t - k)|)|`` per bin.

    ``amps`` has shape ``(..., n, M)``. Bins where some channel is constant
    return NaN (unsortable).
    """
    amps = np.asarray(amps, dtype=float)
    n = amps.shape[-2]
    S = _pair_scores(amps, amps, K0, agg)
    off = ~np.eye(n, dtype=bool)
    return S[..., off].sum(axis=-1)


def select_reference(C, mode: str = "A", lo: int | None = None, hi: int | None = None) -> int:
    """Reference bin: ``argmin C`` over sortable bins in ``[lo, hi]`` (mode A),
    or the fixed bin 4 (mode B). Ties go to the lowest bin."""
    mode = mode.upper()
    if mode == "B":
        return REFERENCE_BIN_B
    if mode != "A":
        raise ValueError(f"unknown reference mode {mode!r}")
    C = np.asarray(C, dtype=float)
    lo = 0 if lo is None else lo
    hi = len(C) - 1 if hi is None else hi
    window = C[lo : hi + 1]
    if window.size == 0 or np.all(np.isnan(window)):
        raise AlignmentError(f"no sortable bin in [{lo}, {hi}]")
    return lo + int(np.nanargmin(window))


def _best_permutation(S):
    n = S.shape[-1]
    perms = list(itertools.permutations(range(n)))
    scores = np.array([sum(S[i, p[i]] for i in range(n)) for p in perms])
    order = np.argsort(-scores, kind="stable")
    best = perms[order[0]]
    margin = float(scores[order[0]] - scores[order[1]]) if len(perms) > 1 else float("inf")
    return best, margin, {p: float(v) for p, v in zip(perms, scores)}


def frequency_permutation(ref, cand, K0: int, agg: str = "max",
                          min_margin: float = 1e-3) -> PermutationResult:
    """Permutation of ``cand`` channels best matching the reference-bin channels."""
    ref = np.asarray(ref, dtype=float)
    cand = np.asarray(cand, dtype=float)
    if ref.shape != cand.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {cand.shape}")
    n = ref.shape[0]
    S = _pair_scores(ref, cand, K0, agg)
    if np.any(np.isnan(S)):
        return PermutationResult(tuple(range(n)), 0.0, {}, confident=False)
    best, margin, objectives = _best_permutation(S)
    return PermutationResult(best, margin, objectives, confident=margin > min_margin)


def align_bins(amps, reference_bin: int, K0: int, agg: str = "max",
               sortable=None) -> PermutationPlan:
    """Align every bin directly against the reference bin, in increasing order.

    ``amps`` has shape ``(bins, n, M)``. Bins marked unsortable, or whose
    correlations are undefined, inherit the permutation of the nearest lower
    sorted bin (identity if there is none).
    """
    amps = np.asarray(amps, dtype=float)
    nb, n, _ = amps.shape
    if sortable is None:
        sortable = np.ones(nb, dtype=bool)
    sortable = np.array(sortable, dtype=bool)
    ref = amps[reference_bin]
    S = _pair_scores(np.broadcast_to(ref, amps.shape), amps, K0, agg)
    sigmas = []
    margins = np.zeros(nb)
    last = tuple(range(n))
    for b in range(nb):
        if b == reference_bin:
            sigmas.append(tuple(range(n)))
            margins[b] = np.inf
            last = sigmas[-1]
            continue
        if not sortable[b] or np.any(np.isnan(S[b])):
            sortable[b] = False
            sigmas.append(last)
            continue
        best, margin, _ = _best_permutation(S[b])
        sigmas.append(best)
        margins[b] = margin
        last = best
    return PermutationPlan(reference_bin, sigmas, margins, np.full(nb, np.nan), sortable)


def time_permutation(prev, new, K1: int, agg: str = "max") -> TimeAlignment:
    """Order and polarity of ``new`` channels matching ``prev`` on a shared interval.

    The sign of each matched channel is that of the correlation at the lag
    where its absolute value peaks.
    """
    prev = np.asarray(prev, dtype=float)
    new = np.asarray(new, dtype=float)
    if prev.shape != new.shape:
        raise ValueError(f"shape mismatch {prev.shape} vs {new.shape}")
    if prev.shape[-1] <= 2 * K1:
        raise AlignmentError(f"overlap of {prev.shape[-1]} samples too short for K1={K1}")
    n = prev.shape[0]
    r = lagged_rho(prev[:, None, :], new[None, :, :], K1)
    S = aggregate_lags(r, agg)
    if np.any(np.isnan(S)):
        return TimeAlignment(tuple(range(n)), np.ones(n), 0.0, float("nan"))
    best, margin, objectives = _best_permutation(S)
    signs = np.ones(n)
    for i in range(n):
        lags = r[i, best[i]]
        k = int(np.nanargmax(np.abs(lags)))
        signs[i] = 1.0 if lags[k] >= 0 else -1.0
    return TimeAlignment(best, signs, margin, objectives[best])

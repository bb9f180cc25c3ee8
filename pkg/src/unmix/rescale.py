"""Scaling of demixing rows and construction of time-domain demixing filters.

Each row ``g_j(b)`` of the per-bin demixing matrix may be multiplied by a
complex ``lambda(b)``. Choosing ``lambda`` to minimize the exponentially
weighted tail energy of the row's inverse DFT,

    sum_{tau=q}^{T-1} beta^(2 tau) sum_j |ifft(lambda g_j)(tau)|^2,

compacts the time-domain filters. With ``lambda(0) = 1``, ``lambda(T/2)``
real and ``lambda(T - b) = conj(lambda(b))`` the filters are real and the
problem is an ordinary linear least-squares problem in ``T - 1`` real
unknowns.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .signal_io import TimeSeries
from .spectral import inverse_spectrum

COND_LIMIT = 1e12
TIKHONOV = 1e-10


@dataclass
class ScalingSolution:
    lam: np.ndarray  # (T,) complex, conjugate-symmetric, lam[0] == 1
    residual: float
    baseline: float  # objective of lam == 1
    regularized: bool = False


@dataclass
class DemixFilterBank:
    h: np.ndarray  # (n, n, T) real; row i produces output i from mixture channel j
    T: int
    support: np.ndarray  # per row: energy fraction at tau >= T/2

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def max_diag(self) -> np.ndarray:
        return np.array([np.max(np.abs(self.h[i, i])) for i in range(self.n)])

    def to_dict(self) -> dict:
        return {"T": self.T, "h": [self.h[i, j].tolist() for i in range(self.n) for j in range(self.n)]}

    @classmethod
    def from_dict(cls, doc: dict) -> "DemixFilterBank":
        T = int(doc["T"])
        seqs = np.asarray(doc["h"], dtype=float)
        n = int(round(np.sqrt(len(seqs))))
        if n * n != len(seqs) or seqs.shape[1] != T:
            raise ValueError("filter document must hold n*n sequences of length T")
        h = seqs.reshape(n, n, T)
        return cls(h, T, support_metric(h))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "DemixFilterBank":
        return cls.from_dict(json.loads(Path(path).read_text()))


def support_metric(h: np.ndarray) -> np.ndarray:
    T = h.shape[-1]
    energy = np.sum(h**2, axis=(1, 2))
    tail = np.sum(h[..., T // 2 :] ** 2, axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(energy > 0, tail / energy, 0.0)


def scaling_system(row: np.ndarray, beta: float, q: int):
    """Linear model ``h(tau) = A x + c`` of the row's inverse DFT for ``tau >= q``.

    ``row`` has shape ``(T, n)``. Unknowns are packed as
    ``[Re l(1), Im l(1), ..., Re l(T/2-1), Im l(T/2-1), l(T/2)]``. Returns the
    unweighted ``A`` (``n (T-q)`` rows), ``c`` and the per-row weights.
    """
    row = np.asarray(row, dtype=complex)
    if row.ndim == 1:
        row = row[:, None]
    T, n = row.shape
    if T % 2:
        raise ValueError("T must be even")
    if not 1 <= q < T:
        raise ValueError(f"q must satisfy 1 <= q < T, got {q}")
    half = T // 2
    tau = np.arange(q, T)
    bins = np.arange(1, half)
    phase = np.exp(2j * np.pi * np.outer(tau, bins) / T)
    alt = np.where(tau % 2 == 0, 1.0, -1.0)

    blocks, consts = [], []
    for j in range(n):
        ge = row[1:half, j][None, :] * phase
        A = np.empty((len(tau), T - 1))
        A[:, 0 : 2 * (half - 1) : 2] = 2.0 / T * ge.real
        A[:, 1 : 2 * (half - 1) : 2] = -2.0 / T * ge.imag
        A[:, -1] = row[half, j].real * alt / T
        blocks.append(A)
        consts.append(np.full(len(tau), row[0, j].real / T))
    weights = np.tile(float(beta) ** tau, n)
    return np.vstack(blocks), np.concatenate(consts), weights


def _unpack(x, T):
    half = T // 2
    lam = np.ones(T, dtype=complex)
    lam[1:half] = x[0 : 2 * (half - 1) : 2] + 1j * x[1 : 2 * (half - 1) : 2]
    lam[half] = x[-1]
    lam[half + 1 :] = np.conj(lam[1:half][::-1])
    return lam


def _pack_ones(T):
    x = np.zeros(T - 1)
    x[0::2][: T // 2 - 1] = 1.0
    x[-1] = 1.0
    return x


def scaling_objective(row, lam, beta: float, q: int) -> float:
    """Weighted tail energy of ``ifft(lam * row)`` over ``tau >= q``."""
    row = np.asarray(row, dtype=complex)
    if row.ndim == 1:
        row = row[:, None]
    T = row.shape[0]
    h = np.fft.ifft(np.asarray(lam)[:, None] * row, axis=0)
    tau = np.arange(q, T)
    return float(np.sum((float(beta) ** tau)[:, None] ** 2 * np.abs(h[q:]) ** 2))


def solve_scaling(row, beta: float = 1.04, q: int = 2, fixed=None) -> ScalingSolution:
    """Weighted least-squares scaling ``lambda(b)`` for one demixing row.

    Parameters
    ----------
    row : ndarray, shape (T,) or (T, n)
        Entries of one row of the inverse mixing matrix at all ``T`` bins
        (conjugate-symmetric in the bin index).
    beta : float
        Weight base, ``> 1``.
    q : int
        First time index whose value is penalized.
    fixed : bool array of length T // 2 + 1, optional
        Bins whose ``lambda`` is held at 1 (e.g. degenerate bins).
    """
    if not beta > 1:
        raise ValueError(f"beta must exceed 1, got {beta}")
    row = np.asarray(row, dtype=complex)
    if row.ndim == 1:
        row = row[:, None]
    T = row.shape[0]
    half = T // 2
    A, c, w = scaling_system(row, beta, q)

    free = np.ones(T - 1, dtype=bool)
    x_fixed = np.zeros(T - 1)
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=bool)
        for b in np.flatnonzero(fixed[1:half]) + 1:
            free[2 * (b - 1)] = free[2 * (b - 1) + 1] = False
            x_fixed[2 * (b - 1)] = 1.0
        if fixed[half]:
            free[-1] = False
            x_fixed[-1] = 1.0
    c_eff = c + A[:, ~free] @ x_fixed[~free]
    Aw = A[:, free] * w[:, None]
    rhs = -c_eff * w

    regularized = False
    x = x_fixed.copy()
    if free.any():
        sol, _, _, sv = np.linalg.lstsq(Aw, rhs, rcond=None)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        if cond > COND_LIMIT:
            regularized = True
            warnings.warn(f"scaling system ill-conditioned (cond {cond:.2e}); regularizing",
                          stacklevel=2)
            alpha = TIKHONOV * sv[0] ** 2
            normal = Aw.T @ Aw + alpha * np.eye(Aw.shape[1])
            sol = np.linalg.solve(normal, Aw.T @ rhs)
        x[free] = sol

    lam = _unpack(x, T)
    residual = float(np.sum(((A @ x + c) * w) ** 2))
    x1 = _pack_ones(T)
    baseline = float(np.sum(((A @ x1 + c) * w) ** 2))
    if residual > baseline:
        # only reachable through regularization or rounding
        lam, residual = np.ones(T, dtype=complex), baseline
    return ScalingSolution(lam, residual, baseline, regularized)


def build_filter_bank(Hinv: np.ndarray, lams) -> DemixFilterBank:
    """Real filters ``h_ij = ifft(lambda_i * Hinv_ij)``.

    ``Hinv`` holds the inverse mixing matrices at all ``T`` bins, shape
    ``(T, n, n)``; ``lams`` is ``(n, T)`` or a list of :class:`ScalingSolution`.
    """
    Hinv = np.asarray(Hinv, dtype=complex)
    T, n, _ = Hinv.shape
    lam = np.array([s.lam if isinstance(s, ScalingSolution) else s for s in lams])
    spectra = lam.T[:, :, None] * Hinv  # (T, n, n)
    h = inverse_spectrum(np.moveaxis(spectra, 0, -1))
    return DemixFilterBank(h, T, support_metric(h))


def continuity_normalize(h_new: DemixFilterBank, h_prev: DemixFilterBank,
                         signs=None) -> DemixFilterBank:
    """Rescale rows so ``max_tau |h_ii|`` matches the previous bank.

    ``signs`` (one per row) flips polarity, e.g. as found by time alignment.
    """
    if h_new.h.shape != h_prev.h.shape:
        raise ValueError(f"filter banks differ in shape: {h_new.h.shape} vs {h_prev.h.shape}")
    new_max = h_new.max_diag()
    if np.any(new_max == 0):
        raise ValueError("degenerate filter bank: a diagonal filter is identically zero")
    gamma = h_prev.max_diag() / new_max
    if signs is not None:
        gamma = gamma * np.asarray(signs, dtype=float)
    h = h_new.h * gamma[:, None, None]
    return DemixFilterBank(h, h_new.T, support_metric(h))


def demix_span(x: np.ndarray, h: DemixFilterBank, start: int, stop: int) -> np.ndarray:
    """Outputs ``s_i(k) = sum_j sum_tau h_ij(tau) x_j(k - tau)`` for ``k`` in
    ``[start, stop)``, using earlier samples of ``x`` as filter history."""
    x = np.asarray(x, dtype=float)
    n = h.n
    if x.shape[0] != n:
        raise ValueError(f"filter bank is {n}x{n} but input has {x.shape[0]} channels")
    lo = max(0, start - (h.T - 1))
    seg = x[:, lo:stop]
    out = np.zeros((n, stop - start))
    for i in range(n):
        acc = np.zeros(seg.shape[1])
        for j in range(n):
            acc += fftconvolve(seg[j], h.h[i, j])[: seg.shape[1]]
        out[i] = acc[start - lo :]
    return out


def apply_demix(mix: TimeSeries, h: DemixFilterBank) -> TimeSeries:
    """Causal FIR demixing of a whole segment, zero history, same length."""
    if len(mix) < h.T:
        raise ValueError(f"segment of {len(mix)} samples shorter than filter length {h.T}")
    return TimeSeries(demix_span(mix.channels, h, 0, len(mix)), mix.sample_rate)

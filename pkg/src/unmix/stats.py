"""Second- and fourth-order statistics of two-channel complex streams.

Fourth-order cumulants are kept as running moment sums so that a sliding
window can be advanced by subtracting the oldest samples and adding the newest
ones. For a stream ``y = (y1, y2)`` the sums are built from the six product
families

    Y1 = y1*y1, Y2 = y1*y2, Y3 = y2*y2,
    Y4 = y1*conj(y1), Y5 = y1*conj(y2), Y6 = y2*conj(y2),

and the 3x3 Gram matrix of the non-conjugated families ``Y1..Y3``, whose
entries are every fourth moment ``E[y_i y_l conj(y_j y_k)]``.

All arrays may carry leading batch axes (one entry per frequency bin).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin

# Y1..Y3 index for the unordered channel pair (a, b).
_PAIR = np.array([[0, 1], [1, 2]])

# Cum(y_i, y_j*, y_k*, y_l) is stored as Q(m) with m - 1 = 8i + 4j + 2k + l.
# Six values are independent; the rest are copies or conjugates.
_INDEPENDENT = (1, 2, 4, 7, 8, 16)
SYMMETRY_MAP = {
    1: (0, False), 2: (1, False), 3: (1, True), 4: (2, False),
    5: (1, True), 6: (2, False), 7: (3, False), 8: (4, False),
    9: (1, False), 10: (3, True), 11: (2, False), 12: (4, True),
    13: (2, False), 14: (4, True), 15: (4, False), 16: (5, False),
}


class DegenerateSignalError(ValueError):
    """A sequence has zero variance, so its correlation coefficient is undefined."""


def q_index(m: int):
    """Channel indices ``(i, j, k, l)`` of ``Q(m)``, zero-based."""
    m -= 1
    return (m >> 3) & 1, (m >> 2) & 1, (m >> 1) & 1, m & 1


@dataclass
class MomentSums:
    """Running sums over ``n`` samples of a two-channel complex stream."""

    n: int
    first: np.ndarray  # (..., 2): sum y
    pseudo: np.ndarray  # (..., 3): sums of Y1, Y2, Y3
    power: np.ndarray  # (..., 3): sums of Y4, Y5, Y6
    gram: np.ndarray  # (..., 3, 3): sum_t P_a(t) conj(P_b(t)) over P = (Y1, Y2, Y3)

    def __add__(self, other: "MomentSums") -> "MomentSums":
        return MomentSums(
            self.n + other.n,
            self.first + other.first,
            self.pseudo + other.pseudo,
            self.power + other.power,
            self.gram + other.gram,
        )

    def __sub__(self, other: "MomentSums") -> "MomentSums":
        return MomentSums(
            self.n - other.n,
            self.first - other.first,
            self.pseudo - other.pseudo,
            self.power - other.power,
            self.gram - other.gram,
        )

    def __getitem__(self, idx) -> "MomentSums":
        return MomentSums(self.n, self.first[idx], self.pseudo[idx], self.power[idx], self.gram[idx])

    def arrays(self):
        return self.first, self.pseudo, self.power, self.gram


def _block_sums(samples: np.ndarray) -> MomentSums:
    y = np.asarray(samples, dtype=complex)
    if y.ndim < 2 or y.shape[-1] != 2:
        raise ValueError(f"samples must have shape (..., N, 2), got {y.shape}")
    y1, y2 = y[..., 0], y[..., 1]
    prod = np.stack([y1 * y1, y1 * y2, y2 * y2], axis=-1)
    cross = np.stack([y1 * np.conj(y1), y1 * np.conj(y2), y2 * np.conj(y2)], axis=-1)
    gram = np.einsum("...ta,...tb->...ab", prod, np.conj(prod))
    return MomentSums(y.shape[-2], y.sum(axis=-2), prod.sum(axis=-2), cross.sum(axis=-2), gram)


def accumulate(samples: np.ndarray) -> MomentSums:
    """Moment sums of a block of samples with shape ``(..., N, 2)``."""
    samples = np.asarray(samples)
    if samples.ndim < 2 or samples.shape[-2] == 0:
        raise ValueError("cannot accumulate an empty block")
    if samples.shape[-2] < 2:
        raise ValueError("need at least 2 samples")
    return _block_sums(samples)


def slide_update(sums: MomentSums, remove: np.ndarray, add: np.ndarray) -> MomentSums:
    """Advance a window: drop the ``remove`` block, append the ``add`` block.

    Cost is linear in the block length and independent of the window size.
    """
    remove = np.asarray(remove)
    add = np.asarray(add)
    delta = remove.shape[-2]
    if add.shape[-2] != delta:
        raise ValueError(f"remove and add blocks differ in length ({delta} vs {add.shape[-2]})")
    if delta >= sums.n:
        raise ValueError(f"slide length {delta} must be smaller than the window size {sums.n}")
    return sums - _block_sums(remove) + _block_sums(add)


@dataclass
class CumulantSet:
    """Covariance and fourth-order cumulants of a two-channel stream.

    ``values[..., s]`` holds the independent cumulants ``Q(1), Q(2), Q(4),
    Q(7), Q(8), Q(16)``; :data:`SYMMETRY_MAP` expands them to all sixteen.
    """

    R: np.ndarray  # (..., 2, 2)
    values: np.ndarray  # (..., 6)
    n: int

    def q(self, m: int) -> np.ndarray:
        slot, conj = SYMMETRY_MAP[m]
        v = self.values[..., slot]
        return np.conj(v) if conj else v

    def tensor(self) -> np.ndarray:
        """Full tensor ``K[..., i, j, k, l] = Cum(y_i, y_j*, y_k*, y_l)``."""
        K = np.empty(self.values.shape[:-1] + (2, 2, 2, 2), dtype=complex)
        for m in range(1, 17):
            K[(...,) + q_index(m)] = self.q(m)
        return K

    @classmethod
    def from_tensor(cls, R: np.ndarray, K: np.ndarray, n: int) -> "CumulantSet":
        values = np.stack([K[(...,) + q_index(m)] for m in _INDEPENDENT], axis=-1)
        return cls(np.asarray(R), values, n)

    def __getitem__(self, idx) -> "CumulantSet":
        return CumulantSet(self.R[idx], self.values[idx], self.n)


def _second_moments(sums: MomentSums):
    """Raw moments ``C[a, b] = E[y_a conj(y_b)]`` and ``P[a, b] = E[y_a y_b]``."""
    N = sums.n
    Y4, Y5, Y6 = (sums.power[..., s] / N for s in range(3))
    C = np.stack([np.stack([Y4, Y5], -1), np.stack([np.conj(Y5), Y6], -1)], -2)
    P = sums.pseudo[..., _PAIR] / N
    return C, P


def cumulants(sums: MomentSums) -> CumulantSet:
    """Empirical cumulants from moment sums, biased ``1/N`` normalization.

    The fourth-order cumulants use raw (uncentered) moments, e.g.

        Q(1) = E|y1|^4 - 2 (E|y1|^2)^2 - |E y1^2|^2,

    while the covariance ``R`` subtracts the sample mean.
    """
    N = sums.n
    if N < 4:
        raise ValueError(f"need at least 4 samples for fourth-order cumulants, got {N}")
    C, P = _second_moments(sums)
    m1 = sums.first / N
    R = C - m1[..., :, None] * np.conj(m1[..., None, :])
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))

    G = sums.gram / N
    il = _PAIR[:, None, None, :]  # axes (i, j, k, l) -> pair(i, l)
    jk = _PAIR[None, :, :, None]  # pair(j, k)
    F = G[..., il, jk]
    K = (
        F
        - np.einsum("...ij,...lk->...ijkl", C, C)
        - np.einsum("...ik,...lj->...ijkl", C, C)
        - np.einsum("...il,...jk->...ijkl", P, np.conj(P))
    )
    out = CumulantSet.from_tensor(R, K, N)
    out.values[..., 0] = out.values[..., 0].real
    out.values[..., 2] = out.values[..., 2].real
    out.values[..., 5] = out.values[..., 5].real
    return out


# -- correlation functions ---------------------------------------------------

_DEGENERATE_REL = 1e-12


def cov(a, b):
    """``M^-1 sum a conj(b) - M^-2 (sum a)(sum conj(b))``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    M = a.shape[-1]
    if M < 2:
        raise ValueError("need at least 2 samples")
    bc = np.conj(b)
    out = np.mean(a * bc, axis=-1) - np.mean(a, axis=-1) * np.mean(bc, axis=-1)
    if not (np.iscomplexobj(a) or np.iscomplexobj(b)):
        out = np.real(out)
    return out


def _is_degenerate(x, var):
    scale = np.mean(np.abs(x) ** 2, axis=-1)
    return ~(np.real(var) > _DEGENERATE_REL * scale)


def rho(a, b):
    """Normalized correlation coefficient ``cov(a, b) / sqrt(cov(a, a) cov(b, b))``."""
    a = np.asarray(a)
    b = np.asarray(b)
    va, vb = np.real(cov(a, a)), np.real(cov(b, b))
    if np.any(_is_degenerate(a, va)) or np.any(_is_degenerate(b, vb)):
        raise DegenerateSignalError("correlation undefined for a constant sequence")
    return cov(a, b) / np.sqrt(va * vb)


def lagged_rho(a, b, K: int) -> np.ndarray:
    """``rho(a(t), b(t + k))`` for ``k = -K..K`` over the overlapping range.

    Inputs have shape ``(..., M)``; the result has shape ``(..., 2K + 1)`` with
    lag ``k`` at index ``k + K``. Lags at which either segment is constant
    give NaN.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    a, b = np.broadcast_arrays(a, b)
    M = a.shape[-1]
    if K < 0 or M <= 2 * K:
        raise ValueError(f"lag bound K={K} too large for length {M}")
    out = np.empty(a.shape[:-1] + (2 * K + 1,))
    for idx, k in enumerate(range(-K, K + 1)):
        if k >= 0:
            x, y = a[..., : M - k], b[..., k:]
        else:
            x, y = a[..., -k:], b[..., : M + k]
        mx = x.mean(axis=-1, keepdims=True)
        my = y.mean(axis=-1, keepdims=True)
        dx, dy = x - mx, y - my
        vx = np.mean(dx * dx, axis=-1)
        vy = np.mean(dy * dy, axis=-1)
        c = np.mean(dx * dy, axis=-1)
        bad = _is_degenerate(x, vx) | _is_degenerate(y, vy)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = c / np.sqrt(vx * vy)
        out[..., idx] = np.where(bad, np.nan, r)
    return out


def aggregate_lags(r: np.ndarray, mode: str = "max") -> np.ndarray:
    """Collapse |rho| over the lag axis by ``max`` or ``sum``; all-NaN gives NaN."""
    absr = np.abs(r)
    all_nan = np.all(np.isnan(absr), axis=-1)
    filled = np.where(np.isnan(absr), 0.0, absr)
    if mode == "max":
        out = filled.max(axis=-1)
    elif mode == "sum":
        out = filled.sum(axis=-1)
    else:
        raise ValueError(f"unknown lag aggregation {mode!r}")
    return np.where(all_nan, np.nan, out)


def rho_maxlag(a, b, K: int = 20) -> float:
    """``max_{|k| <= K} |rho(a(t), b(t + k))|``."""
    r = lagged_rho(a, b, K)
    if np.all(np.isnan(r)):
        raise DegenerateSignalError("correlation undefined at every lag (constant sequence)")
    return float(np.nanmax(np.abs(r)))


# -- display envelope ---------------------------------------------------------

ENVELOPE_TAPS = 400
ENVELOPE_CUTOFF_HZ = 100.0


def display_envelope(x, sample_rate: float, taps: int = ENVELOPE_TAPS,
                     cutoff: float = ENVELOPE_CUTOFF_HZ) -> np.ndarray:
    """Amplitude envelope for plotting: rectify, low-pass, scale peak to 1.

    The low-pass is a linear-phase Hamming-windowed sinc FIR; its group delay
    is compensated and the ends are padded with edge values.
    """
    if sample_rate <= 2 * cutoff:
        raise ValueError(f"sample rate must exceed {2 * cutoff} Hz")
    x = np.abs(np.asarray(x, dtype=float))
    if not np.any(x):
        return np.zeros_like(x)
    h = firwin(taps, cutoff, fs=sample_rate, window="hamming")
    left = (taps - 1) // 2
    right = taps - 1 - left
    padded = np.pad(x, (right, left), mode="edge")
    env = np.convolve(padded, h, mode="valid")
    peak = np.max(np.abs(env))
    return env / peak if peak > 0 else env

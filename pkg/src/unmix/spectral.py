"""Framing and T-point DFT helpers.

Spectra follow ``X(b) = sum_tau x(tau) exp(-2j*pi*b*tau/T)`` with integer bin
``b`` standing for the normalized frequency ``b/T``. Frames use a rectangular
window; reconstruction happens by time-domain filtering, never overlap-add.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SymmetryError(ValueError):
    """A spectrum is not conjugate-symmetric, so its inverse would not be real."""


@dataclass(frozen=True)
class FrameGrid:
    frame_len: int
    overlap_fraction: float
    hop: int
    num_frames: int
    dropped_samples: int = 0

    def frame_start(self, t: int) -> int:
        return t * self.hop

    def span_end(self, last_frame: int) -> int:
        """One past the last sample covered by frames ``0..last_frame``."""
        return last_frame * self.hop + self.frame_len


def frame_hop(T: int, overlap: float) -> int:
    if T < 2 or T & (T - 1):
        raise ValueError(f"frame length must be a power of two, got {T}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap}")
    hop = T * (1.0 - overlap)
    if abs(hop - round(hop)) > 1e-9 or round(hop) < 1:
        raise ValueError(f"T*(1-overlap) must be a positive integer, got {hop}")
    return int(round(hop))


def make_frames(samples: np.ndarray, T: int, overlap: float = 0.0):
    """Cut ``samples`` (shape ``(..., L)``) into frames of length ``T``.

    Returns
    -------
    grid : FrameGrid
    frames : ndarray, shape ``(..., num_frames, T)``
        A read-only strided view; copy before writing.
    """
    samples = np.asarray(samples)
    hop = frame_hop(T, overlap)
    length = samples.shape[-1]
    if length < T:
        raise ValueError(f"frame length T={T} exceeds signal length {length}")
    num = (length - T) // hop + 1
    dropped = length - ((num - 1) * hop + T)
    view = np.lib.stride_tricks.sliding_window_view(samples, T, axis=-1)[..., ::hop, :]
    grid = FrameGrid(T, float(overlap), hop, num, dropped)
    return grid, view[..., :num, :]


def forward_spectrum(frame: np.ndarray, T: int | None = None) -> np.ndarray:
    frame = np.asarray(frame)
    if T is not None and frame.shape[-1] != T:
        raise ValueError(f"frame length {frame.shape[-1]} != T={T}")
    return np.fft.fft(frame, axis=-1)


def conjugate_asymmetry(spectrum: np.ndarray):
    """Worst deviation from ``X(b) = conj(X(T-b))`` along the last axis.

    Returns ``(max_abs_deviation, worst_bin)``; bins 0 and T/2 are measured by
    their imaginary parts.
    """
    spectrum = np.asarray(spectrum)
    mirrored = np.conj(np.roll(spectrum[..., ::-1], 1, axis=-1))
    dev = np.abs(spectrum - mirrored)
    per_bin = dev.reshape(-1, spectrum.shape[-1]).max(axis=0)
    worst = int(np.argmax(per_bin))
    return float(per_bin[worst]), worst


def inverse_spectrum(spectrum: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Real inverse DFT along the last axis, after checking conjugate symmetry."""
    spectrum = np.asarray(spectrum)
    dev, worst = conjugate_asymmetry(spectrum)
    if dev > tol:
        raise SymmetryError(
            f"spectrum is not conjugate-symmetric: bin {worst} deviates by {dev:.3g} (tol {tol:g})"
        )
    return np.fft.ifft(spectrum, axis=-1).real


def half_spectrum(frames: np.ndarray) -> np.ndarray:
    """Bins ``0..T/2`` of the spectra of real frames; the rest follow by symmetry."""
    return np.fft.rfft(frames, axis=-1)


def hermitian_extend(half: np.ndarray, T: int, axis: int = 0) -> np.ndarray:
    """Extend bins ``0..T/2`` to the full ``T`` bins using ``X(T-b) = conj(X(b))``.

    Bins 0 and T/2 are forced real.
    """
    half = np.moveaxis(np.asarray(half, dtype=complex), axis, 0)
    if half.shape[0] != T // 2 + 1:
        raise ValueError(f"expected {T // 2 + 1} bins, got {half.shape[0]}")
    full = np.empty((T,) + half.shape[1:], dtype=complex)
    full[: T // 2 + 1] = half
    full[0] = half[0].real
    full[T // 2] = half[T // 2].real
    full[T // 2 + 1 :] = np.conj(half[1 : T // 2][::-1])
    return np.moveaxis(full, 0, axis)


@dataclass
class SpectralFrames:
    """Per-channel, per-frame spectra; ``data`` has shape ``(channels, frames, T)``."""

    data: np.ndarray
    grid: FrameGrid


def analyze(samples: np.ndarray, T: int, overlap: float = 0.0) -> SpectralFrames:
    grid, frames = make_frames(samples, T, overlap)
    return SpectralFrames(forward_spectrum(frames), grid)

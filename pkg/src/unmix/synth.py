"""Synthetic stand-ins for speech, music and speech noise.

These are desk-scale test sources with the properties the separator relies
on (independence, non-Gaussianity, a shared amplitude envelope across
frequencies within each source). They are not recordings.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .signal_io import TimeSeries

FS = 16000


def _raised_cosine_envelope(n, attack, release):
    env = np.ones(n)
    a = min(attack, n // 2)
    r = min(release, n - a)
    if a:
        env[:a] = 0.5 - 0.5 * np.cos(np.pi * np.arange(a) / a)
    if r:
        env[n - r :] = 0.5 + 0.5 * np.cos(np.pi * np.arange(r) / r)
    return env


def _resonator(x, freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return lfilter([1.0 - r], a, x)


def speech_like(duration: float, rng: np.random.Generator, fs: int = FS) -> np.ndarray:
    """Syllable-modulated noise through per-syllable formant resonators."""
    n = int(round(duration * fs))
    out = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.1) * fs)
    while pos < n:
        syl = int(rng.uniform(0.12, 0.3) * fs)
        seg = rng.standard_normal(syl)
        voiced = np.zeros(syl)
        f0 = rng.uniform(170, 250)
        period = fs / f0
        voiced[np.round(np.arange(0, syl, period)).astype(int).clip(0, syl - 1)] = np.sqrt(period)
        exc = 0.6 * voiced + 0.4 * seg
        shaped = np.zeros(syl)
        for f, bw, g in ((rng.uniform(300, 900), 90, 1.0),
                         (rng.uniform(900, 2400), 120, 0.6),
                         (rng.uniform(2400, 3500), 180, 0.3)):
            shaped += g * _resonator(exc, f, bw, fs)
        env = _raised_cosine_envelope(syl, int(0.03 * fs), int(0.06 * fs))
        env *= rng.uniform(0.4, 1.0)
        stop = min(n, pos + syl)
        out[pos:stop] += (shaped * env)[: stop - pos]
        pos += syl + int(rng.uniform(0.06, 0.3) * fs)
    out += 0.003 * np.std(out) * rng.standard_normal(n)
    return out / np.std(out)


def music_like(duration: float, rng: np.random.Generator, fs: int = FS) -> np.ndarray:
    """Plucked harmonic notes: a broadband attack, a rich harmonic series and
    breath noise, all following the note's decaying envelope."""
    n = int(round(duration * fs))
    out = np.zeros(n)
    scale = 220.0 * 2 ** (np.array([0, 2, 3, 5, 7, 8, 10, 12, 14, 15]) / 12)
    pos = 0
    b, a = butter(2, 6000, fs=fs)
    attack = int(0.015 * fs)
    while pos < n:
        dur = int(rng.choice([0.25, 0.375, 0.5]) * fs)
        f0 = rng.choice(scale)
        t = np.arange(dur) / fs
        vib = 1 + 0.004 * np.sin(2 * np.pi * 5.5 * t)
        phase = 2 * np.pi * f0 * np.cumsum(vib) / fs
        note = np.zeros(dur)
        for h in range(1, 25):
            if h * f0 > 0.4 * fs:
                break
            note += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h**0.7
        env = np.exp(-t / rng.uniform(0.12, 0.3)) * _raised_cosine_envelope(dur, int(0.005 * fs), int(0.02 * fs))
        breath = lfilter(b, a, rng.standard_normal(dur))
        breath[:attack] *= 4.0 * np.linspace(1.0, 0.25, attack)
        note = (note / np.std(note) + 0.4 * breath) * env * rng.uniform(0.5, 1.0)
        stop = min(n, pos + dur)
        out[pos:stop] += note[: stop - pos]
        pos += dur + int(rng.choice([0.0, 0.0, 0.125]) * fs)
    out += 0.003 * np.std(out) * rng.standard_normal(n)
    return out / np.std(out)


def speech_noise(duration: float, rng: np.random.Generator, fs: int = FS) -> np.ndarray:
    """Noise with a speech-like long-term spectrum and slow level fluctuation."""
    n = int(round(duration * fs))
    sos = butter(2, [150, 3500], btype="bandpass", fs=fs, output="sos")
    x = sosfilt(sos, rng.standard_normal(n))
    x = lfilter([1.0], [1.0, -0.7], x)
    slow = sosfilt(butter(2, 3.0, fs=fs, output="sos"), rng.standard_normal(n))
    slow = 1.0 + 0.6 * slow / np.max(np.abs(slow))
    x = x * slow
    return x / np.std(x)


def case_sources(case: int, seed: int, duration: float = 6.0, fs: int = FS) -> TimeSeries:
    """Two independent sources for the synthetic cases.

    Case 2 pairs speech with music; case 3 pairs speech with speech noise at
    a speech-to-noise power ratio of -3.8206 dB. Peak level is 0.25.
    """
    rng = np.random.default_rng(seed)
    s1 = speech_like(duration, rng, fs)
    if case == 2:
        s2 = music_like(duration, rng, fs)
    elif case == 3:
        s2 = speech_noise(duration, rng, fs) * 10 ** (3.8206 / 20)
    else:
        raise ValueError(f"synthetic sources exist for cases 2 and 3, not {case}")
    s = np.stack([s1, s2])
    return TimeSeries(0.25 * s / np.max(np.abs(s)), fs)

"""Audio containers, WAV input/output and synthetic convolutive mixing."""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

_PCM16_SCALE = 32768.0


class AudioFormatError(ValueError):
    """Raised for unreadable or unsupported audio files."""


@dataclass
class TimeSeries:
    """Multichannel real-valued audio.

    ``channels`` is stored as a float64 array of shape ``(n_channels, n_samples)``.
    """

    channels: np.ndarray
    sample_rate: float

    def __post_init__(self):
        data = np.asarray(self.channels, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise ValueError("channels must be a sequence of equal-length sample sequences")
        if data.shape[0] == 0:
            raise ValueError("empty channel list")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.channels = data

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def trimmed(self, length: int) -> "TimeSeries":
        return TimeSeries(self.channels[:, :length], self.sample_rate)


@dataclass
class MixingFilters:
    """FIR mixing filters ``a_ij(p)``, stored as an ``(n, n, P)`` array.

    ``taps[i, j]`` is the impulse response from source ``j`` to receiver ``i``.
    """

    taps: np.ndarray
    noise_snr_db: float | None = None
    seed: int = 1234

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 3 or taps.shape[0] != taps.shape[1]:
            raise ValueError(f"taps must have shape (n, n, P), got {taps.shape}")
        if taps.shape[2] < 1:
            raise ValueError("filter length P must be at least 1")
        self.taps = taps

    @property
    def n(self) -> int:
        return self.taps.shape[0]

    @property
    def P(self) -> int:
        return self.taps.shape[2]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "P": self.P,
            "taps": [self.taps[i, j].tolist() for i in range(self.n) for j in range(self.n)],
            "noise_snr_db": self.noise_snr_db,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixingFilters":
        n, P = int(doc["n"]), int(doc["P"])
        taps = doc["taps"]
        if len(taps) != n * n:
            raise ValueError(f"expected {n * n} tap sequences, got {len(taps)}")
        for seq in taps:
            if len(seq) != P:
                raise ValueError(f"every tap sequence must have length P={P}")
        arr = np.asarray(taps, dtype=np.float64).reshape(n, n, P)
        return cls(arr, noise_snr_db=doc.get("noise_snr_db"), seed=int(doc.get("seed", 1234)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "MixingFilters":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_filters(P: int = 48, seed: int = 1234) -> MixingFilters:
    """Demo 2x2 room-like filters.

    Direct paths are a unit impulse followed by three decaying echoes; cross
    paths are a delayed echo train starting at -6 dB. These are illustrative
    values, not measured room responses.
    """
    if P < 46:
        raise ValueError("default filters need P >= 46")
    taps = np.zeros((2, 2, P))
    taps[0, 0, [0, 9, 21, 34]] = [1.0, 0.35, 0.2, 0.1]
    taps[1, 1, [0, 13, 26, 41]] = [1.0, 0.3, 0.18, 0.08]
    taps[0, 1, [1, 15, 29, 45]] = [0.5, 0.3, 0.15, 0.08]
    taps[1, 0, [2, 19, 33, 44]] = [0.5, 0.28, 0.16, 0.07]
    return MixingFilters(taps, seed=seed)


def read_wav(path) -> TimeSeries:
    """Read a PCM WAV file into a :class:`TimeSeries` normalized to [-1, 1].

    16-bit integer and 32-bit float encodings are accepted.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError or struct errors on bad headers
        raise AudioFormatError(f"cannot read WAV file {path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"unsupported WAV encoding {data.dtype} in {path}; expected 16-bit PCM or 32-bit float"
        )
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    return TimeSeries(samples.T.copy(), float(rate))


def write_wav(path, series: TimeSeries, *, float32: bool = False) -> None:
    """Write ``series`` as 16-bit PCM (default) or 32-bit float WAV.

    Samples outside [-1, 1] are clipped with a warning. The file is first
    written under a ``.partial`` suffix and renamed once complete.
    """
    data = np.asarray(series.channels, dtype=np.float64)
    if data.size == 0:
        raise ValueError("cannot write an empty series")
    if not np.all(np.isfinite(data)):
        raise ValueError("series contains NaN or Inf samples")
    peak = np.max(np.abs(data))
    if peak > 1.0:
        warnings.warn(f"clipping samples with peak {peak:.3f} to [-1, 1]", stacklevel=2)
        data = np.clip(data, -1.0, 1.0)
    if float32:
        out = data.T.astype(np.float32)
    else:
        out = np.round(data.T * (_PCM16_SCALE - 1)).astype(np.int16)

    path = Path(path)
    partial = path.with_name(path.name + ".partial")
    with open(partial, "wb") as fh:
        wavfile.write(fh, int(round(series.sample_rate)), out)
    os.replace(partial, path)


def convolve_mix(
    sources: TimeSeries,
    filters: MixingFilters,
    noise_snr_db: float | None = None,
    seed: int | None = None,
) -> TimeSeries:
    """Causal convolutive mixing ``x_i(k) = sum_j sum_p a_ij(p) s_j(k - p)``.

    Parameters
    ----------
    sources : TimeSeries
        ``n`` source channels.
    filters : MixingFilters
        ``(n, n, P)`` mixing taps.
    noise_snr_db : float, optional
        If given, white Gaussian noise is added to each output channel at this
        SNR relative to that channel's clean power. Falls back to
        ``filters.noise_snr_db``.
    seed : int, optional
        Noise generator seed; falls back to ``filters.seed``.
    """
    s = sources.channels
    n, length = s.shape
    if filters.n != n:
        raise ValueError(f"filters are {filters.n}x{filters.n} but sources have {n} channels")
    if filters.P > length:
        raise ValueError(f"filter length P={filters.P} exceeds source length {length}")

    x = np.zeros((n, length))
    for i in range(n):
        for j in range(n):
            taps = filters.taps[i, j]
            if not np.any(taps):
                continue
            x[i] += lfilter(taps, [1.0], s[j])

    if noise_snr_db is None:
        noise_snr_db = filters.noise_snr_db
    if noise_snr_db is not None:
        rng = np.random.default_rng(filters.seed if seed is None else seed)
        power = np.mean(x**2, axis=1, keepdims=True)
        scale = np.sqrt(power / 10.0 ** (noise_snr_db / 10.0))
        x = x + scale * rng.standard_normal(x.shape)
    return TimeSeries(x, sources.sample_rate)

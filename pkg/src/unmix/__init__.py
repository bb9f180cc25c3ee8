"""Blind separation of two-channel convolutive audio mixtures.

Per-bin JADE on short-time spectra, envelope-correlation permutation
alignment, support-minimizing scaling and a sliding-window dynamic mode.
"""

from .config import PRESETS, SeparationConfig
from .metrics import EvalReport, evaluate
from .pipeline import SeparationResult, separate_batch, separate_dynamic
from .signal_io import MixingFilters, TimeSeries, convolve_mix, default_filters, read_wav, write_wav

__all__ = [
    "PRESETS", "SeparationConfig", "EvalReport", "evaluate", "SeparationResult",
    "separate_batch", "separate_dynamic", "MixingFilters", "TimeSeries", "convolve_mix",
    "default_filters", "read_wav", "write_wav",
]
__version__ = "0.1.0"

"""Separation parameters and the three published parameter presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class SeparationConfig:
    T: int = 256
    overlap: float = 0.5
    nT: int = 100  # initial / sliding window, frames
    dnT: int = 20  # update stride, frames
    DnT: int = 40  # time-alignment overlap, frames
    K0: int = 15  # lag bound, frequency sorting
    K1: int = 20  # lag bound, time alignment
    K2: int = 20  # lag bound, evaluation metric
    beta: float = 1.04
    q: int = 2
    batch_nT: int = 160
    reference: str = "A"
    omega_lo: int | None = None  # bins; None -> 0
    omega_hi: int | None = None  # bins; None -> T/2
    lag_agg: str = "max"
    seed: int = 1234

    def __post_init__(self):
        for name in ("T", "nT", "dnT", "DnT", "K0", "K1", "K2", "q", "batch_nT"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.dnT >= self.nT:
            raise ValueError("dnT must be smaller than nT")
        if self.DnT > self.nT - self.dnT:
            raise ValueError("DnT must not exceed nT - dnT")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if self.q >= self.T:
            raise ValueError("q must be smaller than T")
        if self.reference.upper() not in ("A", "B"):
            raise ValueError("reference must be 'A' or 'B'")
        if self.lag_agg not in ("max", "sum"):
            raise ValueError("lag_agg must be 'max' or 'sum'")
        lo, hi = self.bin_range
        if not 0 <= lo <= hi <= self.T // 2:
            raise ValueError(f"reference search range [{lo}, {hi}] outside 0..{self.T // 2}")

    @property
    def hop(self) -> int:
        return int(round(self.T * (1 - self.overlap)))

    @property
    def bin_range(self):
        lo = 0 if self.omega_lo is None else self.omega_lo
        hi = self.T // 2 if self.omega_hi is None else self.omega_hi
        return lo, hi

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "SeparationConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


PRESETS = {
    "case1": SeparationConfig(T=512, overlap=0.0, nT=100, dnT=20, DnT=30, K0=4, K1=10,
                              beta=1.04, q=2, batch_nT=200),
    "case2": SeparationConfig(T=256, overlap=0.5, nT=100, dnT=20, DnT=40, K0=15, K1=20,
                              beta=1.04, q=2, batch_nT=160),
    "case3": SeparationConfig(T=256, overlap=0.5, nT=100, dnT=20, DnT=40, K0=10, K1=20,
                              beta=1.04, q=2, batch_nT=160),
}

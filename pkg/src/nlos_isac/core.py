"""System numerology, TDD symbol mask and bin <-> physical unit mapping.

Monostatic OFDM radar conventions used throughout the package:

* delay and range: ``tau = 2 r / c``
* Doppler and speed: ``f_D = 2 v f_c / c``

A range bin ``k`` of the zero-padded image maps to ``k * range_per_bin_m`` and a
(centred, signed) Doppler bin ``l`` maps to ``l * speed_per_bin_mps``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


def next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


@dataclass(frozen=True)
class SystemConfig:
    """OFDM/TDD numerology of the sensing system (5G NR FR2, numerology 3)."""

    carrier_frequency_hz: float = 27.4e9
    subcarrier_count: int = 1584
    subcarrier_spacing_hz: float = 120e3
    symbol_count_per_frame: int = 1120
    symbol_duration_s: float = 8.92e-6
    frame_duration_s: float = 10e-3
    dl_symbols_per_pattern: int = 104
    ul_symbols_per_pattern: int = 36
    tdd_pattern_duration_s: float = 1.25e-3

    def __post_init__(self):
        n, m = self.subcarrier_count, self.symbol_count_per_frame
        if n < 1 or m < 1:
            raise ConfigError("subcarrier_count and symbol_count_per_frame must be >= 1")
        for name in ("carrier_frequency_hz", "subcarrier_spacing_hz", "symbol_duration_s",
                     "frame_duration_s", "tdd_pattern_duration_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.dl_symbols_per_pattern < 1 or self.ul_symbols_per_pattern < 0:
            raise ConfigError("need dl_symbols_per_pattern >= 1 and ul_symbols_per_pattern >= 0")
        if m % self.pattern_length:
            raise ConfigError(
                f"symbol_count_per_frame={m} is not a multiple of the TDD pattern "
                f"length {self.pattern_length}")
        implied = self.pattern_length * self.symbol_duration_s
        if abs(implied - self.tdd_pattern_duration_s) > 0.01 * self.tdd_pattern_duration_s:
            raise ConfigError(
                f"tdd_pattern_duration_s={self.tdd_pattern_duration_s} disagrees with "
                f"(M_DL+M_UL)*T={implied:.6g} by more than 1%")
        if m * self.symbol_duration_s > self.frame_duration_s * (1 + 1e-9):
            raise ConfigError("M * T exceeds frame_duration_s")

    @property
    def pattern_length(self) -> int:
        return self.dl_symbols_per_pattern + self.ul_symbols_per_pattern

    @property
    def pattern_count(self) -> int:
        return self.symbol_count_per_frame // self.pattern_length

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def speed_resolution_mps(self) -> float:
        """Unpadded Doppler resolution over one frame, ``lambda / (2 M T)``."""
        return self.wavelength_m / (2 * self.symbol_count_per_frame * self.symbol_duration_s)

    @property
    def range_resolution_m(self) -> float:
        return SPEED_OF_LIGHT / (2 * self.subcarrier_count * self.subcarrier_spacing_hz)


@dataclass(frozen=True)
class SymbolMask:
    """Per-symbol usability flags; ``True`` marks a DL symbol available for sensing."""

    usable: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.usable, dtype=bool).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "usable", arr)

    def __len__(self):
        return self.usable.size

    @property
    def popcount(self) -> int:
        return int(self.usable.sum())

    def __eq__(self, other):
        return isinstance(other, SymbolMask) and np.array_equal(self.usable, other.usable)

    __hash__ = None


@dataclass(frozen=True)
class AxisMap:
    subcarrier_count: int
    symbol_count: int
    padded_rows: int
    padded_cols: int
    range_per_bin_m: float
    speed_per_bin_mps: float

    @property
    def unambiguous_range_m(self) -> float:
        return self.padded_rows * self.range_per_bin_m

    @property
    def unambiguous_speed_mps(self) -> float:
        """Full Doppler span; representable speeds cover half of it either side of 0."""
        return self.padded_cols * self.speed_per_bin_mps

    def range_of_bin(self, k):
        return np.asarray(k) * self.range_per_bin_m

    def speed_of_bin(self, doppler_bin):
        return np.asarray(doppler_bin) * self.speed_per_bin_mps

    def bin_of_range(self, r):
        return np.rint(np.asarray(r) / self.range_per_bin_m).astype(int)

    def bin_of_speed(self, v):
        return np.rint(np.asarray(v) / self.speed_per_bin_mps).astype(int)


def build_tdd_mask(cfg: SystemConfig) -> SymbolMask:
    """DL-first periodic mask: ``M_DL`` usable symbols then ``M_UL`` blanked ones."""
    if cfg.symbol_count_per_frame % cfg.pattern_length:
        raise ConfigError("TDD pattern length does not divide the symbol count")
    period = np.zeros(cfg.pattern_length, dtype=bool)
    period[: cfg.dl_symbols_per_pattern] = True
    return SymbolMask(np.tile(period, cfg.pattern_count))


def axis_map(cfg: SystemConfig) -> AxisMap:
    n_pad = next_pow2(cfg.subcarrier_count)
    m_pad = next_pow2(cfg.symbol_count_per_frame)
    return AxisMap(
        subcarrier_count=cfg.subcarrier_count,
        symbol_count=cfg.symbol_count_per_frame,
        padded_rows=n_pad,
        padded_cols=m_pad,
        range_per_bin_m=SPEED_OF_LIGHT / (2 * n_pad * cfg.subcarrier_spacing_hz),
        speed_per_bin_mps=cfg.wavelength_m / (2 * m_pad * cfg.symbol_duration_s),
    )


def replica_spacing_bins(cfg: SystemConfig, axes: AxisMap) -> float:
    """Doppler offset (padded bins) between a peak and its first TDD replica.

    Without UL symbols there are no holes, and the aliasing distance ``M'`` is returned.
    """
    if cfg.ul_symbols_per_pattern == 0:
        return float(axes.padded_cols)
    return axes.padded_cols / cfg.pattern_length


def replica_spacing_mps(cfg: SystemConfig) -> float:
    """Replica spacing in speed: unpadded resolution times the number of TDD patterns."""
    return cfg.speed_resolution_mps * cfg.pattern_count


def replica_power_ratios(cfg: SystemConfig, k_max: int) -> np.ndarray:
    """Power of the k-th replica relative to the main peak, ``k = 1..k_max``.

    These are the squared Fourier-series coefficients of one TDD period,
    normalised by the DC coefficient.
    """
    p = cfg.pattern_length
    m = np.arange(cfg.dl_symbols_per_pattern)
    k = np.arange(1, k_max + 1)[:, None]
    coeff = np.exp(-2j * np.pi * k * m / p).sum(axis=1) / cfg.dl_symbols_per_pattern
    return np.abs(coeff) ** 2


def implied_pattern_duration(cfg: SystemConfig) -> float:
    return cfg.pattern_length * cfg.symbol_duration_s


def frame_dead_time_s(cfg: SystemConfig) -> float:
    """Gap between the last symbol of a frame and the next frame start."""
    return max(0.0, cfg.frame_duration_s - cfg.symbol_count_per_frame * cfg.symbol_duration_s)


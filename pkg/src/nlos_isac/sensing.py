"""Per-frame sensing: periodogram, CA-CFAR, TDD replica rejection, static/NLOS gating."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.fft
from scipy import ndimage

from .config import ConfigError
from .core import (AxisMap, SymbolMask, SystemConfig, axis_map, build_tdd_mask,
                   replica_power_ratios, replica_spacing_bins)
from .scene import CsiFrame


@dataclass(frozen=True)
class RadarImage:
    """Range-Doppler power map.

    Rows are range bins ``row_offset .. row_offset + rows - 1``; columns are
    Doppler bins after fftshift, column ``c`` meaning signed bin ``c - M'/2``.
    """

    s: np.ndarray = field(repr=False)
    axes: AxisMap = None
    frame_index: int = 0
    row_offset: int = 0

    @property
    def is_full(self) -> bool:
        return self.row_offset == 0 and self.s.shape[0] == self.axes.padded_rows

    def doppler_bin(self, col):
        return np.asarray(col) - self.axes.padded_cols // 2


@dataclass(frozen=True)
class Peak:
    range_m: float
    speed_mps: float
    power: float = float("nan")
    range_bin: int = -1
    doppler_bin: int = 0

    @property
    def z(self) -> tuple[float, float]:
        return (self.range_m, self.speed_mps)


class Cell(NamedTuple):
    row: int       # absolute range bin
    col: int       # image column (shifted Doppler axis)
    power: float


@dataclass(frozen=True)
class CfarConfig:
    training_cells: tuple = (8, 8)
    guard_cells: tuple = (2, 2)
    probability_of_false_alarm: float = 1e-4

    def __post_init__(self):
        tr = tuple(int(v) for v in np.broadcast_to(self.training_cells, 2))
        gu = tuple(int(v) for v in np.broadcast_to(self.guard_cells, 2))
        object.__setattr__(self, "training_cells", tr)
        object.__setattr__(self, "guard_cells", gu)
        if min(tr) < 1:
            raise ConfigError("training_cells must be >= 1 per axis")
        if min(gu) < 0:
            raise ConfigError("guard_cells must be >= 0")
        if not 0 < self.probability_of_false_alarm < 1:
            raise ConfigError("probability_of_false_alarm must lie in (0, 1)")

    @property
    def outer_size(self) -> tuple[int, int]:
        return tuple(2 * (t + g) + 1 for t, g in zip(self.training_cells, self.guard_cells))

    @property
    def inner_size(self) -> tuple[int, int]:
        return tuple(2 * g + 1 for g in self.guard_cells)

    @property
    def training_count(self) -> int:
        return math.prod(self.outer_size) - math.prod(self.inner_size)

    @property
    def alpha(self) -> float:
        return cfar_alpha(self.training_count, self.probability_of_false_alarm)


def cfar_alpha(n_train: int, pfa: float) -> float:
    """CA-CFAR scale factor for exponentially distributed cell power."""
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


@dataclass(frozen=True)
class SensingConfig:
    cfar: CfarConfig = CfarConfig()
    replica_margin: float = 3.0
    replica_tolerance_bins: int = 1
    sidelobe_margin: float = 3.0
    suppress_sidelobes: bool = True
    speed_gate_mps: float | None = None
    roi_margin_bins: int = 32

    def __post_init__(self):
        if isinstance(self.cfar, dict):
            from .config import from_mapping
            object.__setattr__(self, "cfar", from_mapping(CfarConfig, self.cfar, "sensing.cfar"))
        if self.replica_margin <= 0 or self.sidelobe_margin <= 0:
            raise ConfigError("margins must be positive")
        if self.replica_tolerance_bins < 0 or self.roi_margin_bins < 0:
            raise ConfigError("bin counts must be >= 0")


# --------------------------------------------------------------------------- periodogram

def compute_periodogram(frame: CsiFrame | np.ndarray, axes: AxisMap,
                        rows: tuple[int, int] | None = None, frame_index: int | None = None,
                        ) -> RadarImage:
    """Zero-padded range-Doppler periodogram.

    DFT over symbols (Doppler), inverse DFT without 1/N' over subcarriers (range),
    ``|.|^2 / (N' M')``, Doppler axis fft-shifted.  ``rows=(lo, hi)`` keeps only
    range bins ``lo <= k < hi``; the transforms are separable, so cropping after
    the range transform gives the same values as cropping the full image.
    """
    h = frame.h if isinstance(frame, CsiFrame) else np.asarray(frame)
    if frame_index is None:
        frame_index = frame.frame_index if isinstance(frame, CsiFrame) else 0
    if h.shape != (axes.subcarrier_count, axes.symbol_count):
        raise ValueError(f"frame shape {h.shape} does not match "
                         f"({axes.subcarrier_count}, {axes.symbol_count})")
    n_pad, m_pad = axes.padded_rows, axes.padded_cols
    lo, hi = (0, n_pad) if rows is None else rows
    if not 0 <= lo < hi <= n_pad:
        raise ValueError(f"row window {rows} outside [0, {n_pad})")
    y = scipy.fft.ifft(h, n=n_pad, axis=0, norm="forward")[lo:hi]
    y = scipy.fft.fft(y, n=m_pad, axis=1)
    s = (y.real ** 2 + y.imag ** 2).astype(np.float64)
    s /= n_pad * m_pad
    s = np.fft.fftshift(s, axes=1)
    return RadarImage(s=s, axes=axes, frame_index=frame_index, row_offset=lo)


# --------------------------------------------------------------------------- CFAR

def _window_sums(s: np.ndarray, size, modes) -> np.ndarray:
    return ndimage.uniform_filter(s, size=size, mode=modes) * math.prod(size)


def cfar_noise_estimate(image: RadarImage, cfar: CfarConfig) -> np.ndarray:
    """Mean of the training cells around every cell (toroidal in Doppler)."""
    s = image.s
    outer, inner = cfar.outer_size, cfar.inner_size
    if outer[0] > s.shape[0] or outer[1] > s.shape[1]:
        raise ValueError(f"CFAR window {outer} larger than image {s.shape}")
    modes = ("wrap" if image.is_full else "reflect", "wrap")
    train = _window_sums(s, outer, modes) - _window_sums(s, inner, modes)
    np.maximum(train, 0.0, out=train)
    return train / cfar.training_count


def cfar_mask(image: RadarImage, cfar: CfarConfig) -> np.ndarray:
    """Cells whose power exceeds ``alpha`` times the local training mean."""
    return image.s > cfar.alpha * cfar_noise_estimate(image, cfar)


def cfar_detect(image: RadarImage, cfar: CfarConfig) -> list[Cell]:
    """CA-CFAR detections reduced to local maxima of the guard neighbourhood.

    Returned strongest first.
    """
    s = image.s
    rows, cols = np.nonzero(cfar_mask(image, cfar))
    if rows.size == 0:
        return []
    gr, gc = cfar.guard_cells
    n_rows, n_cols = s.shape
    keep = np.ones(rows.size, dtype=bool)
    centre = s[rows, cols]
    for dr in range(-gr, gr + 1):
        rr = rows + dr
        if image.is_full:
            rr %= n_rows
            valid = np.ones_like(keep)
        else:
            valid = (rr >= 0) & (rr < n_rows)
            rr = np.clip(rr, 0, n_rows - 1)
        for dc in range(-gc, gc + 1):
            if dr == 0 and dc == 0:
                continue
            nb = s[rr, (cols + dc) % n_cols]
            keep &= ~valid | (nb <= centre)
    rows, cols, power = rows[keep], cols[keep], centre[keep]
    order = np.lexsort((cols, rows, -power))
    off = image.row_offset
    return [Cell(int(rows[i]) + off, int(cols[i]), float(power[i])) for i in order]


# --------------------------------------------------------------------------- replicas

def _offset_envelope(weights: np.ndarray, n_pad: int, oversample: int = 16) -> np.ndarray:
    """Worst-case power ratio between a cell ``d`` bins away and the peak bin.

    The response of an aperture with sample ``weights`` is evaluated on a grid
    ``oversample`` times finer than the padded bins; the true peak may sit up to
    half a bin away from the bin reporting it, so the maximum over that offset
    is taken.  Index ``d`` is the circular offset ``0 .. n_pad - 1``.
    """
    o = oversample
    resp = np.abs(np.fft.fft(weights, n=n_pad * o)) ** 2
    d = np.arange(n_pad)[:, None] * o
    delta = np.arange(-(o // 2), o // 2 + 1)[None, :]
    num = resp[(d - delta) % resp.size]
    den = resp[(-delta) % resp.size]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, 0.0)
    env = ratio.max(axis=1)
    env[0] = 1.0
    return env


@dataclass
class ReplicaModel:
    """Expected replica/sidelobe geometry of a point target for one numerology."""

    cfg: SystemConfig
    axes: AxisMap
    mask: SymbolMask
    k_max: int | None = None

    def __post_init__(self):
        m_pad = self.axes.padded_cols
        self.spacing = replica_spacing_bins(self.cfg, self.axes)
        has_holes = not self.mask.usable.all()
        if self.k_max is None:
            self.k_max = int((m_pad / 2) // self.spacing) if has_holes else 0
        if not has_holes:
            self.k_max = 0
        self.ratios = replica_power_ratios(self.cfg, self.k_max) if self.k_max else np.zeros(0)
        self.offsets = np.rint(np.arange(1, self.k_max + 1) * self.spacing).astype(int)
        self.range_envelope = _offset_envelope(np.ones(self.axes.subcarrier_count),
                                               self.axes.padded_rows)
        self.doppler_envelope = _offset_envelope(self.mask.usable.astype(float), m_pad)


def reject_tdd_replicas(cells: Sequence[Cell], image: RadarImage, cfg: SystemConfig,
                        model: ReplicaModel | None = None,
                        sensing: SensingConfig = SensingConfig()) -> list[Peak]:
    """Greedy replica rejection.

    The strongest unclaimed cell is accepted.  Cells in its range bin that sit
    within ``replica_tolerance_bins`` of ``+-k * M'/(M_DL + M_UL)`` Doppler bins
    and are no stronger than ``replica_margin`` times the expected replica power
    are dropped.  With ``suppress_sidelobes`` any cell below ``sidelobe_margin``
    times the point-target envelope (range x Doppler, including the TDD
    replicas) is dropped as well.  Repeats until no cells remain.
    """
    axes = image.axes
    if model is None:
        model = ReplicaModel(cfg, axes, build_tdd_mask(cfg))
    m_pad, n_pad = axes.padded_cols, axes.padded_rows
    if not cells:
        return []
    rows = np.array([c.row for c in cells])
    cols = np.array([c.col for c in cells])
    power = np.array([c.power for c in cells])
    order = np.argsort(-power, kind="stable")
    rows, cols, power = rows[order], cols[order], power[order]
    alive = np.ones(rows.size, dtype=bool)
    tol = sensing.replica_tolerance_bins
    accepted = []
    for i in range(rows.size):
        if not alive[i]:
            continue
        alive[i] = False
        accepted.append(i)
        others = np.nonzero(alive)[0]
        if others.size == 0:
            break
        dk = rows[others] - rows[i]
        dl = (cols[others] - cols[i]) % m_pad
        dl_signed = np.where(dl > m_pad // 2, dl - m_pad, dl)
        kill = np.zeros(others.size, dtype=bool)
        if model.k_max:
            same_row = dk == 0
            dist = np.abs(np.abs(dl_signed)[:, None] - model.offsets[None, :])
            in_win = dist <= tol
            expected = power[i] * model.ratios[None, :] * sensing.replica_margin
            kill |= same_row & np.any(in_win & (power[others][:, None] <= expected), axis=1)
        if sensing.suppress_sidelobes:
            env = (model.range_envelope[dk % n_pad] * model.doppler_envelope[dl])
            kill |= power[others] <= sensing.sidelobe_margin * power[i] * env
        alive[others[kill]] = False
    peaks = []
    half = m_pad // 2
    for i in accepted:
        d_bin = int(cols[i]) - half
        peaks.append(Peak(range_m=float(rows[i] * axes.range_per_bin_m),
                          speed_mps=float(d_bin * axes.speed_per_bin_mps),
                          power=float(power[i]), range_bin=int(rows[i]), doppler_bin=d_bin))
    return peaks


def discard_static(peaks: Iterable[Peak], speed_gate_mps: float) -> list[Peak]:
    """Keep peaks with ``|speed| > speed_gate_mps``."""
    return [p for p in peaks if abs(p.speed_mps) > speed_gate_mps]


def nlos_filter(peaks: Iterable[Peak], nlos_boundary_range_m: float,
                max_range_m: float | None = None) -> list[Peak]:
    """Keep peaks beyond the main reflector (and, optionally, below ``max_range_m``)."""
    if nlos_boundary_range_m < 0:
        raise ValueError("boundary must be >= 0")
    return [p for p in peaks if p.range_m > nlos_boundary_range_m
            and (max_range_m is None or p.range_m <= max_range_m)]


# --------------------------------------------------------------------------- pipeline

class Detector:
    """Frame -> moving NLOS peaks, with per-numerology precomputation cached."""

    def __init__(self, cfg: SystemConfig, sensing: SensingConfig = SensingConfig(),
                 nlos_boundary_range_m: float = 0.0, max_range_m: float | None = None,
                 mask: SymbolMask | None = None):
        self.cfg = cfg
        self.sensing = sensing
        self.axes = axis_map(cfg)
        self.mask = mask if mask is not None else build_tdd_mask(cfg)
        self.model = ReplicaModel(cfg, self.axes, self.mask)
        self.boundary = nlos_boundary_range_m
        self.max_range = max_range_m
        self.speed_gate = (sensing.speed_gate_mps if sensing.speed_gate_mps is not None
                           else cfg.speed_resolution_mps)
        self.rows = None
        if max_range_m is not None:
            margin = sensing.roi_margin_bins
            lo = int(math.floor(nlos_boundary_range_m / self.axes.range_per_bin_m)) - margin
            hi = int(math.ceil(max_range_m / self.axes.range_per_bin_m)) + margin + 1
            lo, hi = max(lo, 0), min(hi, self.axes.padded_rows)
            if hi - lo < self.axes.padded_rows:
                self.rows = (lo, hi)

    def image(self, frame: CsiFrame) -> RadarImage:
        return compute_periodogram(frame, self.axes, rows=self.rows)

    def all_peaks(self, frame: CsiFrame) -> list[Peak]:
        """Peaks after CFAR and replica rejection, before static/NLOS gating."""
        img = self.image(frame)
        cells = cfar_detect(img, self.sensing.cfar)
        return reject_tdd_replicas(cells, img, self.cfg, self.model, self.sensing)

    def __call__(self, frame: CsiFrame) -> list[Peak]:
        peaks = discard_static(self.all_peaks(frame), self.speed_gate)
        return nlos_filter(peaks, self.boundary, self.max_range)


# --------------------------------------------------------------------------- CSV

PEAK_FIELDS = ("frame_index", "t_s", "range_m", "speed_mps", "power_db")


def write_peaks_csv(path, peak_stream: Sequence[Sequence[Peak]], frame_duration_s: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PEAK_FIELDS)
        for k, peaks in enumerate(peak_stream):
            for p in peaks:
                db = 10 * math.log10(p.power) if p.power > 0 else float("nan")
                w.writerow([k, f"{k * frame_duration_s:.6f}", f"{p.range_m:.6f}",
                            f"{p.speed_mps:.6f}", f"{db:.4f}"])


def read_peaks_csv(path, frame_count: int | None = None) -> list[list[Peak]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PEAK_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(PEAK_FIELDS)}")
        for rec in reader:
            db = float(rec["power_db"])
            rows.append((int(rec["frame_index"]),
                         Peak(float(rec["range_m"]), float(rec["speed_mps"]),
                              10 ** (db / 10) if math.isfinite(db) else float("nan"))))
    n = frame_count if frame_count is not None else (max((k for k, _ in rows), default=-1) + 1)
    stream: list[list[Peak]] = [[] for _ in range(n)]
    for k, p in rows:
        if k >= n:
            raise ValueError(f"{path}: frame_index {k} beyond frame count {n}")
        stream[k].append(p)
    return stream

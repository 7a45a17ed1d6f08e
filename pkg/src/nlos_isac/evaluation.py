"""Clutter injection, sliding sub-measurement windows and ROC sweeps."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError
from .kf import KfConfig, KfTracker
from .phd import PhdConfig, PhdFilter
from .sensing import Peak

DEFAULT_SPEED_GATE = 0.5475922177260973   # unpadded speed resolution of the default numerology
DEFAULT_MAX_SPEED = 306.6526              # half the padded Doppler span of the default numerology


@dataclass(frozen=True)
class ClutterConfig:
    """Poisson false peaks, uniform over range x |speed| with a random speed sign.

    The speed band is given by magnitude so the zero-Doppler gate stays excluded.
    """

    rate: float = 0.8
    range_bounds_m: tuple = (23.0, 60.0)
    speed_bounds_mps: tuple = (DEFAULT_SPEED_GATE, DEFAULT_MAX_SPEED)
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "range_bounds_m", tuple(map(float, self.range_bounds_m)))
        object.__setattr__(self, "speed_bounds_mps", tuple(map(float, self.speed_bounds_mps)))
        if self.rate < 0:
            raise ConfigError("clutter rate must be >= 0")
        (r0, r1), (v0, v1) = self.range_bounds_m, self.speed_bounds_mps
        if not (0 <= r0 < r1) or not (0 < v0 < v1):
            raise ConfigError("clutter bounds must be ordered, speeds as a positive magnitude band")

    @property
    def volume(self) -> float:
        (r0, r1), (v0, v1) = self.range_bounds_m, self.speed_bounds_mps
        return (r1 - r0) * 2 * (v1 - v0)

    @property
    def intensity(self) -> float:
        return self.rate / self.volume


def sample_clutter(cfg: ClutterConfig, frame_index: int,
                   rng: np.random.Generator | None = None, stream: int = 0) -> list[Peak]:
    """False peaks for one frame; ``stream`` separates e.g. the TP and FP datasets."""
    if rng is None:
        key = (2, int(stream), int(frame_index))
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=key))
    n = int(rng.poisson(cfg.rate)) if cfg.rate > 0 else 0
    if n == 0:
        return []
    r = rng.uniform(*cfg.range_bounds_m, size=n)
    v = rng.uniform(*cfg.speed_bounds_mps, size=n) * rng.choice((-1.0, 1.0), size=n)
    return [Peak(float(a), float(b)) for a, b in zip(r, v)]


def inject_clutter(peak_stream: Sequence[Sequence[Peak]], cfg: ClutterConfig,
                   stream: int = 0) -> list[list[Peak]]:
    return [list(peaks) + sample_clutter(cfg, k, stream=stream)
            for k, peaks in enumerate(peak_stream)]


@dataclass(frozen=True)
class WindowSpec:
    window_s: float = 0.3
    frame_interval_s: float = 0.01

    def __post_init__(self):
        if self.frame_interval_s <= 0:
            raise ConfigError("frame_interval_s must be positive")
        if self.window_s < self.frame_interval_s * (1 - 1e-9):
            raise ConfigError(f"window {self.window_s * 1e3:g} ms shorter than one frame "
                              f"({self.frame_interval_s * 1e3:g} ms)")

    @property
    def frames(self) -> int:
        return math.ceil(self.window_s / self.frame_interval_s - 1e-9)


def split_windows(frame_count: int, spec: WindowSpec) -> list[range]:
    n = spec.frames
    if frame_count < n:
        raise ValueError(f"{frame_count} frames cannot hold a {n}-frame window")
    return [range(s, s + n) for s in range(frame_count - n + 1)]


@dataclass(frozen=True)
class RocPoint:
    parameter: float
    fn_rate: float
    fp_rate: float
    window_count_tp: int
    window_count_fp: int


def _as_arrays(stream) -> list[np.ndarray]:
    out = []
    for peaks in stream:
        if isinstance(peaks, np.ndarray):
            out.append(peaks.reshape(-1, 2))
        else:
            out.append(np.array([p.z if hasattr(p, "z") else p for p in peaks],
                                dtype=float).reshape(-1, 2))
    return out


def make_tracker(kind: str, params, check: bool = False):
    """Fresh tracker; KF updates always verify PSD, ``check`` adds the PHD checks."""
    if kind == "kf":
        return KfTracker(params if params is not None else KfConfig())
    if kind == "phd":
        return PhdFilter(params if params is not None else PhdConfig(), check=check)
    raise ValueError(f"unknown tracker kind {kind!r}")


def classify_window(peak_stream, tracker: str, params=None, check: bool = False) -> bool:
    """Intruder decision of a freshly initialised tracker over one window."""
    filt = make_tracker(tracker, params, check)
    for peaks in peak_stream:
        if filt.step(peaks)[0]:
            return True
    return False


def window_decisions(stream, windows: Sequence[range], tracker: str, params,
                     check: bool = False) -> np.ndarray:
    arrays = stream if stream and isinstance(stream[0], np.ndarray) else _as_arrays(stream)
    return np.array([classify_window([arrays[k] for k in w], tracker, params, check)
                     for w in windows], dtype=bool)


def with_parameter(kind: str, base, value):
    if kind == "kf":
        return replace(base or KfConfig(), max_range_variance=float(value))
    if kind == "phd":
        return replace(base or PhdConfig(), birth_weight=float(value))
    raise ValueError(f"unknown tracker kind {kind!r}")


def roc_sweep(tp_stream, fp_stream, tracker: str, param_grid, spec: WindowSpec,
              base=None, check: bool = False) -> list[RocPoint]:
    """FN rate over TP windows and FP rate over FP windows for each parameter value.

    KF sweeps the range-variance threshold, PHD the birth weight.
    """
    tp = _as_arrays(tp_stream)
    fp = _as_arrays(fp_stream)
    tp_win = split_windows(len(tp), spec)
    fp_win = split_windows(len(fp), spec)
    points = []
    for value in sorted(float(v) for v in param_grid):
        params = with_parameter(tracker, base, value)
        hits = window_decisions(tp, tp_win, tracker, params, check)
        alarms = window_decisions(fp, fp_win, tracker, params, check)
        points.append(RocPoint(value, 1.0 - hits.mean(), float(alarms.mean()),
                               len(tp_win), len(fp_win)))
    return points


def fn_at_fp(points: Sequence[RocPoint], fp_level: float) -> float:
    """Lowest FN rate among operating points whose FP rate does not exceed ``fp_level``."""
    ok = [p.fn_rate for p in points if p.fp_rate <= fp_level + 1e-12]
    return min(ok) if ok else 1.0


ROC_FIELDS = ("tracker", "param", "tm_ms", "fn_rate", "fp_rate", "n_tp_windows", "n_fp_windows")


def write_roc_csv(path, rows):
    """``rows``: iterable of (tracker, window_ms, RocPoint)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROC_FIELDS)
        for kind, tm_ms, p in rows:
            w.writerow([kind, f"{p.parameter:.6g}", f"{tm_ms:g}", f"{p.fn_rate:.6f}",
                        f"{p.fp_rate:.6f}", p.window_count_tp, p.window_count_fp])


def plot_data_name(kind: str, tm_ms: float) -> str:
    return f"roc_{kind}_{tm_ms:g}ms.dat"


def write_plot_data(path, points: Sequence[RocPoint]) -> Path:
    """One whitespace-separated x/y file per curve (x = FP rate, y = FN rate)."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# x=fp_rate y=fn_rate param\n")
        for p in sorted(points, key=lambda p: (p.fp_rate, p.fn_rate)):
            fh.write(f"{p.fp_rate:.6f} {p.fn_rate:.6f} {p.parameter:.6g}\n")
    return path

"""Kalman-filter bank with nearest-neighbour gating and covariance/time confirmation.

State and measurement are both ``[range_m, speed_mps]`` (identity observation).
The 2x2 algebra is written out on Python floats: the tracker runs millions of
tiny steps during ROC sweeps and numpy call overhead would dominate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .config import ConfigError

TENTATIVE, CONFIRMED, DELETED = "tentative", "confirmed", "deleted"


@dataclass(frozen=True)
class KfConfig:
    dt_s: float = 0.01
    gating_distance: float = 5.0
    min_confirm_time_s: float = 0.06
    max_range_variance: float = 20.0
    process_noise_std: tuple = (3.5, 1.8)
    measurement_noise_std: tuple = (1.8, 1.8)
    nlos: bool = True
    init_inflation: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "process_noise_std", tuple(map(float, self.process_noise_std)))
        object.__setattr__(self, "measurement_noise_std",
                           tuple(map(float, self.measurement_noise_std)))
        if min(self.process_noise_std + self.measurement_noise_std) <= 0:
            raise ConfigError("noise standard deviations must be positive")
        if self.gating_distance <= 0:
            raise ConfigError("gating_distance must be positive")
        if self.min_confirm_time_s < 0:
            raise ConfigError("min_confirm_time_s must be >= 0")
        if self.dt_s < 0 or self.init_inflation <= 0:
            raise ConfigError("dt_s must be >= 0 and init_inflation > 0")

    @property
    def transition(self) -> np.ndarray:
        """``F``; the minus sign models the range-rate reversal of a single bounce."""
        return np.array([[1.0, -self.dt_s if self.nlos else self.dt_s], [0.0, 1.0]])

    @property
    def Q(self) -> np.ndarray:
        return np.diag(np.square(self.process_noise_std))

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.square(self.measurement_noise_std))

    @property
    def confirm_steps(self) -> int:
        if self.dt_s == 0:
            return 0
        return math.ceil(self.min_confirm_time_s / self.dt_s - 1e-9)


@dataclass
class Track:
    r: float
    v: float
    prr: float
    prv: float
    pvv: float
    id: int = 0
    steps: int = 0
    timer_s: float = 0.0
    status: str = TENTATIVE

    @property
    def x(self) -> np.ndarray:
        return np.array([self.r, self.v])

    @property
    def P(self) -> np.ndarray:
        return np.array([[self.prr, self.prv], [self.prv, self.pvv]])

    @property
    def active(self) -> bool:
        return self.status != DELETED

    def is_psd(self, tol: float = 1e-9) -> bool:
        det = self.prr * self.pvv - self.prv ** 2
        return self.prr >= -tol and self.pvv >= -tol and det >= -tol * max(1.0, self.prr * self.pvv)


def new_track(z, cfg: KfConfig, track_id: int = 0) -> Track:
    sr, sv = cfg.measurement_noise_std
    k = cfg.init_inflation
    return Track(r=float(z[0]), v=float(z[1]), prr=k * sr * sr, prv=0.0, pvv=k * sv * sv,
                 id=track_id)


def predict(track: Track, cfg: KfConfig) -> Track:
    a = -cfg.dt_s if cfg.nlos else cfg.dt_s
    qr, qv = cfg.process_noise_std
    prr = track.prr + 2 * a * track.prv + a * a * track.pvv + qr * qr
    prv = track.prv + a * track.pvv
    pvv = track.pvv + qv * qv
    return replace(track, r=track.r + a * track.v, prr=prr, prv=prv, pvv=pvv)


def _innovation_inverse(track: Track, cfg: KfConfig):
    rr, rv = cfg.measurement_noise_std
    s11 = track.prr + rr * rr
    s12 = track.prv
    s22 = track.pvv + rv * rv
    det = s11 * s22 - s12 * s12
    return s22 / det, -s12 / det, s11 / det


def normalized_distance(track: Track, z, cfg: KfConfig) -> float:
    """Mahalanobis distance of ``z`` from the track with ``S = P + R``."""
    i11, i12, i22 = _innovation_inverse(track, cfg)
    dr, dv = z[0] - track.r, z[1] - track.v
    return math.sqrt(max(dr * dr * i11 + 2 * dr * dv * i12 + dv * dv * i22, 0.0))


def associate(tracks: Sequence[Track], peaks, cfg: KfConfig):
    """Each track picks its closest gated peak; returns ({track_idx: peak_idx}, leftovers).

    A peak may serve several tracks.  Equal distances resolve to the lower peak index.
    """
    zs = [(float(p[0]), float(p[1])) for p in _as_pairs(peaks)]
    assignment = {}
    claimed = set()
    for ti, tr in enumerate(tracks):
        best, best_d = -1, math.inf
        for pi, z in enumerate(zs):
            d = normalized_distance(tr, z, cfg)
            if d < best_d:
                best, best_d = pi, d
        if best >= 0 and best_d <= cfg.gating_distance:
            assignment[ti] = best
            claimed.add(best)
    leftovers = [pi for pi in range(len(zs)) if pi not in claimed]
    return assignment, leftovers


def update(track: Track, z, cfg: KfConfig) -> Track:
    """Linear-Gaussian update with ``H = I``; ``z=None`` coasts.  Advances the timer."""
    steps = track.steps + 1
    if z is None:
        return replace(track, steps=steps, timer_s=steps * cfg.dt_s)
    i11, i12, i22 = _innovation_inverse(track, cfg)
    prr, prv, pvv = track.prr, track.prv, track.pvv
    # K = P S^-1
    k11 = prr * i11 + prv * i12
    k12 = prr * i12 + prv * i22
    k21 = prv * i11 + pvv * i12
    k22 = prv * i12 + pvv * i22
    dr, dv = float(z[0]) - track.r, float(z[1]) - track.v
    # P+ = P - K P, re-symmetrised
    n_rr = prr - (k11 * prr + k12 * prv)
    n_rv = prv - 0.5 * ((k11 * prv + k12 * pvv) + (k21 * prr + k22 * prv))
    n_vv = pvv - (k21 * prv + k22 * pvv)
    out = replace(track, r=track.r + k11 * dr + k12 * dv, v=track.v + k21 * dr + k22 * dv,
                  prr=n_rr, prv=n_rv, pvv=n_vv, steps=steps, timer_s=steps * cfg.dt_s)
    if not out.is_psd():
        raise FloatingPointError(f"track {track.id}: covariance lost positive semi-definiteness")
    return out


def confirm_or_delete(tracks: Sequence[Track], cfg: KfConfig):
    """Returns (confirmed, survivors, deleted); survivors include confirmed tracks."""
    confirmed, survivors, deleted = [], [], []
    need = cfg.confirm_steps
    for tr in tracks:
        if tr.prr > cfg.max_range_variance:
            deleted.append(replace(tr, status=DELETED))
            continue
        if tr.status == CONFIRMED or tr.steps >= need:
            tr = replace(tr, status=CONFIRMED)
            confirmed.append(tr)
        survivors.append(tr)
    return confirmed, survivors, deleted


def _as_pairs(peaks):
    if peaks is None:
        return []
    if isinstance(peaks, np.ndarray):
        return peaks.reshape(-1, 2)
    return [p.z if hasattr(p, "z") else p for p in peaks]


@dataclass
class KfTracker:
    """Sequential track-confirmation state machine (one instance per evaluation window)."""

    cfg: KfConfig = field(default_factory=KfConfig)
    tracks: list = field(default_factory=list)
    alarm: bool = False
    next_id: int = 0
    frame: int = 0
    last_deleted: list = field(default_factory=list)

    def step(self, peaks):
        cfg = self.cfg
        zs = _as_pairs(peaks)
        predicted = [predict(t, cfg) for t in self.tracks]
        assignment, leftovers = associate(predicted, zs, cfg)
        updated = [update(t, zs[assignment[i]] if i in assignment else None, cfg)
                   for i, t in enumerate(predicted)]
        for pi in leftovers:
            updated.append(new_track(zs[pi], cfg, self.next_id))
            self.next_id += 1
        confirmed, self.tracks, self.last_deleted = confirm_or_delete(updated, cfg)
        self.alarm |= bool(confirmed)
        self.frame += 1
        return self.alarm, confirmed


TRACK_FIELDS = ("frame_index", "track_id", "status", "range_m", "speed_mps", "var_rr", "var_vv")


def run_kf(peak_stream, cfg: KfConfig = KfConfig()):
    """Run over a whole stream; returns (per-frame alarm flags, track log rows)."""
    tracker = KfTracker(cfg)
    alarms, log = [], []
    for k, peaks in enumerate(peak_stream):
        _, confirmed = tracker.step(peaks)
        alarms.append(bool(confirmed))
        for t in tracker.tracks + tracker.last_deleted:
            log.append((k, t.id, t.status, t.r, t.v, t.prr, t.pvv))
    return alarms, log


def write_track_log(path, log):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACK_FIELDS)
        for k, tid, status, r, v, prr, pvv in log:
            w.writerow([k, tid, status, f"{r:.6f}", f"{v:.6f}", f"{prr:.6g}", f"{pvv:.6g}"])

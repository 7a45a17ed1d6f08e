"""Gaussian-mixture PHD filter over ``[range_m, speed_mps]``.

Components are held as arrays ``w (J,)``, ``m (J, 2)``, ``P (J, 2, 2)``.
Births are measurement driven: every peak of the previous scan seeds one
component of weight ``w_B``.  No spawning term.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class GaussianMixture:
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    P: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        self.m = np.asarray(self.m, dtype=float).reshape(-1, 2)
        self.P = np.asarray(self.P, dtype=float).reshape(-1, 2, 2)
        if not (len(self.w) == len(self.m) == len(self.P)):
            raise ValueError("weights, means and covariances differ in length")

    def __len__(self):
        return self.w.size

    @property
    def mass(self) -> float:
        return float(self.w.sum())

    @classmethod
    def from_components(cls, comps):
        comps = list(comps)
        if not comps:
            return cls()
        return cls([c.weight for c in comps], [c.mean for c in comps], [c.cov for c in comps])

    def components(self):
        return [GaussianComponent(float(w), m.copy(), P.copy())
                for w, m, P in zip(self.w, self.m, self.P)]

    def concat(self, other: "GaussianMixture") -> "GaussianMixture":
        return GaussianMixture(np.concatenate([self.w, other.w]),
                               np.concatenate([self.m, other.m]),
                               np.concatenate([self.P, other.P]))

    def to_text(self) -> str:
        lines = [f"components: {len(self)}"]
        for w, m, P in zip(self.w, self.m, self.P):
            lines.append(f"- weight: {w:.6e}\n  mean: [{m[0]:.6f}, {m[1]:.6f}]\n"
                         f"  cov: [[{P[0, 0]:.6g}, {P[0, 1]:.6g}], [{P[1, 0]:.6g}, {P[1, 1]:.6g}]]")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PhdConfig:
    dt_s: float = 0.01
    survival_probability: float = 0.98
    detection_probability: float = 0.9
    birth_weight: float = 1e-5
    birth_covariance: tuple | None = None      # default 4 R
    clutter_intensity: float = 3.5e-5          # lambda / V for the default clutter region
    merge_radius: float = 0.7                  # squared Mahalanobis distance
    prune_weight_threshold: float = 1e-6
    max_components: int = 30
    process_noise_std: tuple = (3.5, 1.8)
    measurement_noise_std: tuple = (1.8, 1.8)
    nlos: bool = True

    def __post_init__(self):
        object.__setattr__(self, "process_noise_std", tuple(map(float, self.process_noise_std)))
        object.__setattr__(self, "measurement_noise_std",
                           tuple(map(float, self.measurement_noise_std)))
        if not 0 < self.survival_probability <= 1 or not 0 < self.detection_probability <= 1:
            raise ConfigError("survival/detection probabilities must lie in (0, 1]")
        if self.clutter_intensity < 0 or self.birth_weight < 0:
            raise ConfigError("clutter_intensity and birth_weight must be >= 0")
        if self.max_components < 1 or self.merge_radius < 0 or self.prune_weight_threshold < 0:
            raise ConfigError("invalid pruning/merging settings")
        if self.birth_covariance is not None:
            b = np.asarray(self.birth_covariance, dtype=float)
            if b.shape != (2, 2) or not np.allclose(b, b.T) or np.linalg.eigvalsh(b).min() <= 0:
                raise ConfigError("birth_covariance must be a symmetric positive definite 2x2")

    @property
    def F(self) -> np.ndarray:
        return np.array([[1.0, -self.dt_s if self.nlos else self.dt_s], [0.0, 1.0]])

    @property
    def Q(self) -> np.ndarray:
        return np.diag(np.square(self.process_noise_std))

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.square(self.measurement_noise_std))

    @property
    def B(self) -> np.ndarray:
        if self.birth_covariance is None:
            return 4.0 * self.R
        return np.asarray(self.birth_covariance, dtype=float)


def _inv2(S: np.ndarray):
    """Batched inverse and determinant of symmetric 2x2 matrices."""
    a, b, d = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
    det = a * d - b * b
    inv = np.empty_like(S)
    inv[..., 0, 0] = d / det
    inv[..., 0, 1] = inv[..., 1, 0] = -b / det
    inv[..., 1, 1] = a / det
    return inv, det


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def phd_predict(gm: GaussianMixture, cfg: PhdConfig) -> GaussianMixture:
    F = cfg.F
    P = _sym(F @ gm.P @ F.T + cfg.Q)
    return GaussianMixture(cfg.survival_probability * gm.w, gm.m @ F.T, P)


def phd_add_birth(gm: GaussianMixture, z_prev, cfg: PhdConfig) -> GaussianMixture:
    z = _as_array(z_prev)
    if z.shape[0] == 0:
        return gm
    birth = GaussianMixture(np.full(z.shape[0], cfg.birth_weight), z,
                            np.broadcast_to(cfg.B, (z.shape[0], 2, 2)).copy())
    return gm.concat(birth)


def phd_update(gm: GaussianMixture, z_mov, cfg: PhdConfig) -> GaussianMixture:
    """Missed-detection copies plus one Kalman-updated copy per (component, measurement)."""
    pd = cfg.detection_probability
    z = _as_array(z_mov)
    missed = GaussianMixture((1 - pd) * gm.w, gm.m, gm.P)
    if z.shape[0] == 0 or len(gm) == 0:
        return missed
    S = gm.P + cfg.R
    S_inv, det = _inv2(S)
    K = gm.P @ S_inv                                   # (J,2,2)
    P_upd = _sym(gm.P - K @ gm.P)
    nu = z[:, None, :] - gm.m[None, :, :]              # (Z,J,2)
    d2 = np.einsum("zji,jik,zjk->zj", nu, S_inv, nu)
    q = np.exp(-0.5 * d2) / (2 * np.pi * np.sqrt(det))[None, :]
    num = pd * gm.w[None, :] * q                       # (Z,J)
    w_upd = num / (cfg.clutter_intensity + num.sum(axis=1, keepdims=True))
    m_upd = gm.m[None, :, :] + np.einsum("jik,zjk->zji", K, nu)
    nz, nj = num.shape
    detected = GaussianMixture(w_upd.reshape(-1), m_upd.reshape(-1, 2),
                               np.broadcast_to(P_upd, (nz, nj, 2, 2)).reshape(-1, 2, 2))
    return missed.concat(detected)


def phd_prune_merge(gm: GaussianMixture, cfg: PhdConfig) -> GaussianMixture:
    keep = gm.w >= cfg.prune_weight_threshold
    w, m, P = gm.w[keep], gm.m[keep], gm.P[keep]
    if w.size == 0:
        return GaussianMixture()
    # heaviest first; ties by range so the outcome does not depend on input order
    order = np.lexsort((m[:, 1], m[:, 0], -w))
    w, m, P = w[order], m[order], P[order]
    alive = np.ones(w.size, dtype=bool)
    out_w, out_m, out_P = [], [], []
    P_inv, _ = _inv2(P)
    for j in range(w.size):
        if not alive[j]:
            continue
        idx = np.nonzero(alive)[0]
        diff = m[idx] - m[j]
        d2 = np.einsum("ni,ik,nk->n", diff, P_inv[j], diff)
        members = idx[d2 <= cfg.merge_radius]
        alive[members] = False
        wm = w[members]
        w_sum = wm.sum()
        mean = (wm[:, None] * m[members]).sum(axis=0) / w_sum
        dm = m[members] - mean
        spread = P[members] + dm[:, :, None] * dm[:, None, :]
        cov = (wm[:, None, None] * spread).sum(axis=0) / w_sum
        out_w.append(w_sum)
        out_m.append(mean)
        out_P.append(_sym(cov))
    out = GaussianMixture(out_w, out_m, out_P)
    if len(out) > cfg.max_components:
        top = np.lexsort((out.m[:, 0], -out.w))[: cfg.max_components]
        out = GaussianMixture(out.w[top], out.m[top], out.P[top])
    return out


def check_invariants(gm: GaussianMixture, tol: float = 1e-9) -> None:
    """Raise ``FloatingPointError`` on negative weights or non-symmetric / non-PSD covariances."""
    if len(gm) == 0:
        return
    if (gm.w < 0).any():
        raise FloatingPointError("negative component weight")
    scale = np.maximum(1.0, np.abs(gm.P).max(axis=(1, 2)))
    if (np.abs(gm.P - np.swapaxes(gm.P, 1, 2)).max(axis=(1, 2)) > tol * scale).any():
        raise FloatingPointError("covariance lost symmetry")
    if (np.linalg.eigvalsh(gm.P).min(axis=1) < -tol * scale).any():
        raise FloatingPointError("covariance lost positive semi-definiteness")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def phd_extract(gm: GaussianMixture):
    """Means of the ``P_hat = round(sum w)`` heaviest components, and ``P_hat``."""
    if len(gm) == 0:
        return np.zeros((0, 2)), 0
    p_hat = min(max(round_half_up(gm.mass), 0), len(gm))
    order = np.lexsort((gm.m[:, 0], -gm.w))
    return gm.m[order[:p_hat]].copy(), p_hat


def _as_array(z) -> np.ndarray:
    if z is None:
        return np.zeros((0, 2))
    if isinstance(z, np.ndarray):
        return z.reshape(-1, 2).astype(float)
    z = [p.z if hasattr(p, "z") else p for p in z]
    return np.asarray(z, dtype=float).reshape(-1, 2)


@dataclass
class PhdFilter:
    cfg: PhdConfig = field(default_factory=PhdConfig)
    gm: GaussianMixture = field(default_factory=GaussianMixture)
    z_prev: np.ndarray | None = None
    alarm: bool = False
    check: bool = False    # verify covariance invariants after every stage

    def step(self, z_mov):
        z = _as_array(z_mov)
        gm = phd_predict(self.gm, self.cfg)
        if self.z_prev is not None:
            gm = phd_add_birth(gm, self.z_prev, self.cfg)
        if self.check:
            check_invariants(gm)
        gm = phd_update(gm, z, self.cfg)
        if self.check:
            check_invariants(gm)
        self.gm = phd_prune_merge(gm, self.cfg)
        if self.check:
            check_invariants(self.gm)
        self.z_prev = z
        states, p_hat = phd_extract(self.gm)
        self.alarm |= p_hat >= 1
        return self.alarm, states


ESTIMATE_FIELDS = ("frame_index", "alarm", "p_hat")


def run_phd(peak_stream, cfg: PhdConfig = PhdConfig()):
    """Per-frame (alarm, P_hat, states) over a whole stream."""
    filt = PhdFilter(cfg)
    out = []
    for peaks in peak_stream:
        _, states = filt.step(peaks)
        out.append((len(states) >= 1, len(states), states))
    return out


def write_estimates(path, results):
    width = max((n for _, n, _ in results), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = list(ESTIMATE_FIELDS)
        for i in range(1, width + 1):
            header += [f"range_m_{i}", f"speed_mps_{i}"]
        w.writerow(header)
        for k, (alarm, n, states) in enumerate(results):
            row = [k, int(alarm), n]
            for r, v in states:
                row += [f"{r:.6f}", f"{v:.6f}"]
            w.writerow(row)

"""Synthetic CSI for point-scatterer scenes (static clutter, NLOS movers, noise).

Channel model for one frame at time ``t``::

    h[n, m] = sum_p b_p exp(-j 2 pi n df tau_p(t)) exp(+j 2 pi m T f_D,p) + w[n, m]

with ``tau_p = 2 r_p / c`` and ``f_D,p = s_p 2 v_p f_c / c``.  ``s_p = -1`` for
scatterers seen over a single bounce (NLOS) and ``+1`` otherwise, so an NLOS
target receding from the sensor shows up with negative measured speed.
UL symbol columns are zeroed after the noise is added.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .config import ConfigError, from_mapping, load_yaml, check_sections
from .core import SPEED_OF_LIGHT, SymbolMask, SystemConfig, axis_map, build_tdd_mask


@dataclass(frozen=True)
class Scatterer:
    """Point reflector.

    A moving scatterer without waypoints moves at constant radial speed.  With
    ``waypoints_m`` it paces towards each waypoint in turn (cycling) at
    ``|radial_speed_mps|`` and stands still for ``dwell_s`` on every arrival.
    """

    kind: str = "static"
    initial_range_m: float = 10.0
    radial_speed_mps: float = 0.0
    amplitude: float = 1.0
    nlos: bool = False
    waypoints_m: tuple = ()
    dwell_s: float = 0.2
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("static", "moving"):
            raise ConfigError(f"kind must be 'static' or 'moving', got {self.kind!r}")
        if self.kind == "static" and (self.radial_speed_mps != 0 or self.waypoints_m):
            raise ConfigError("static scatterer must have radial_speed_mps = 0 and no waypoints")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be >= 0")
        if self.dwell_s < 0:
            raise ConfigError("dwell_s must be >= 0")
        if self.waypoints_m and self.radial_speed_mps == 0:
            raise ConfigError("waypoint trajectory needs a nonzero radial_speed_mps")
        wps = tuple(float(w) for w in self.waypoints_m)
        object.__setattr__(self, "waypoints_m", wps)
        if wps:
            stops = (self.initial_range_m,) + wps
            repeats = any(a == b for a, b in zip(stops, stops[1:]))
            if repeats or (len(wps) > 1 and wps[0] == wps[-1]):
                raise ConfigError("consecutive waypoints must differ")


@dataclass(frozen=True)
class Scene:
    scatterers: tuple = ()
    noise_power: float = 0.0
    nlos_boundary_range_m: float = 23.0
    duration_s: float = 10.0
    seed: int = 0
    max_range_m: float | None = None

    def __post_init__(self):
        scs = tuple(s if isinstance(s, Scatterer) else from_mapping(Scatterer, s, "scatterers")
                    for s in self.scatterers)
        object.__setattr__(self, "scatterers", scs)
        if self.noise_power < 0:
            raise ConfigError("noise_power must be >= 0")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        nlos = [s for s in scs if s.nlos]
        if nlos:
            if self.nlos_boundary_range_m <= 0:
                raise ConfigError("nlos_boundary_range_m must be positive")
            top = max(max((s.initial_range_m,) + s.waypoints_m) for s in nlos)
            if self.nlos_boundary_range_m >= top:
                raise ConfigError("nlos_boundary_range_m must be below the farthest NLOS scatterer")

    def validate(self, cfg: SystemConfig) -> None:
        """Check every scatterer against the unambiguous range/speed of ``cfg``."""
        axes = axis_map(cfg)
        r_max = axes.unambiguous_range_m
        v_max = axes.unambiguous_speed_mps / 2
        for i, s in enumerate(self.scatterers):
            where = f"scatterers[{i}]"
            if not 0 < s.initial_range_m < r_max:
                raise ConfigError(f"{where}.initial_range_m={s.initial_range_m} outside "
                                  f"(0, {r_max:.1f}) m unambiguous range")
            for w in s.waypoints_m:
                if not 0 < w < r_max:
                    raise ConfigError(f"{where}.waypoints_m entry {w} outside (0, {r_max:.1f}) m")
            if abs(s.radial_speed_mps) >= v_max:
                raise ConfigError(f"{where}.radial_speed_mps={s.radial_speed_mps} exceeds "
                                  f"unambiguous speed {v_max:.1f} m/s")
            if s.kind == "moving" and not s.waypoints_m:
                r_end = s.initial_range_m + s.radial_speed_mps * self.duration_s
                if not 0 < r_end < r_max:
                    raise ConfigError(f"{where} leaves (0, {r_max:.1f}) m before duration_s")


@dataclass(frozen=True)
class CsiFrame:
    h: np.ndarray = field(repr=False)
    mask: SymbolMask = field(repr=False)
    frame_index: int = 0
    timestamp_s: float = 0.0


def _legs(s: Scatterer, t_end: float):
    """Yield (t_start, t_arrive, t_leave, r_from, r_to) for each leg up to t_end."""
    speed = abs(s.radial_speed_mps)
    t, r = 0.0, s.initial_range_m
    i = 0
    while t <= t_end:
        target = s.waypoints_m[i % len(s.waypoints_m)]
        t_arrive = t + abs(target - r) / speed
        yield t, t_arrive, t_arrive + s.dwell_s, r, target
        t, r = t_arrive + s.dwell_s, target
        i += 1


def trajectory_state(s: Scatterer, t: float, duration_s: float | None = None):
    """Range and signed range rate of ``s`` at time ``t``."""
    if t < 0 or (duration_s is not None and t > duration_s + 1e-12):
        raise ValueError(f"t={t} outside [0, {duration_s}]")
    if s.kind == "static":
        return s.initial_range_m, 0.0
    if not s.waypoints_m:
        return s.initial_range_m + s.radial_speed_mps * t, s.radial_speed_mps
    speed = abs(s.radial_speed_mps)
    for t0, t_arrive, t_leave, r0, r1 in _legs(s, t):
        if t < t_arrive:
            direction = math.copysign(1.0, r1 - r0)
            return r0 + direction * speed * (t - t0), direction * speed
        if t < t_leave:
            return r1, 0.0
    # t exactly at the end of a dwell with a zero-length next leg
    return r1, 0.0


def scatterer_phases(scene: Scene) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(scene.seed, spawn_key=(0,)))
    return rng.uniform(0, 2 * np.pi, size=len(scene.scatterers))


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, int(frame_index))))


def synthesize_csi(scene: Scene, cfg: SystemConfig, frame_index: int,
                   rng: np.random.Generator | None = None, *, mask: SymbolMask | None = None,
                   phases: np.ndarray | None = None, dtype=np.complex128) -> CsiFrame:
    t = frame_index * cfg.frame_duration_s
    if t > scene.duration_s + 1e-9:
        raise ValueError(f"frame {frame_index} starts after the scene duration")
    if mask is None:
        mask = build_tdd_mask(cfg)
    if phases is None:
        phases = scatterer_phases(scene)
    n = np.arange(cfg.subcarrier_count)
    m = np.arange(cfg.symbol_count_per_frame)
    real_dtype = np.float32 if dtype == np.complex64 else np.float64

    scs = scene.scatterers
    if scs:
        state = np.array([trajectory_state(s, t) for s in scs])
        sign = np.array([-1.0 if s.nlos else 1.0 for s in scs])
        tau = 2 * state[:, 0] / SPEED_OF_LIGHT
        f_d = sign * 2 * state[:, 1] * cfg.carrier_frequency_hz / SPEED_OF_LIGHT
        b = np.array([s.amplitude for s in scs]) * np.exp(1j * phases)
        rng_part = np.exp(-2j * np.pi * cfg.subcarrier_spacing_hz * np.outer(n, tau))
        dop_part = b[:, None] * np.exp(2j * np.pi * cfg.symbol_duration_s * np.outer(f_d, m))
        h = (rng_part.astype(dtype) @ dop_part.astype(dtype))
    else:
        h = np.zeros((cfg.subcarrier_count, cfg.symbol_count_per_frame), dtype=dtype)

    if scene.noise_power > 0:
        if rng is None:
            rng = frame_rng(scene.seed, frame_index)
        w = rng.standard_normal((cfg.subcarrier_count, 2 * cfg.symbol_count_per_frame),
                                dtype=real_dtype)
        w *= real_dtype(math.sqrt(scene.noise_power / 2))
        h += w.view(dtype)
    h[:, ~mask.usable] = 0
    return CsiFrame(h=h, mask=mask, frame_index=frame_index, timestamp_s=t)


def frame_count(scene: Scene, cfg: SystemConfig) -> int:
    return int(math.floor(scene.duration_s / cfg.frame_duration_s + 1e-9))


def iter_dataset(scene: Scene, cfg: SystemConfig, dtype=np.complex128) -> Iterator[CsiFrame]:
    if scene.duration_s < cfg.frame_duration_s:
        raise ValueError("scene shorter than one frame")
    mask = build_tdd_mask(cfg)
    phases = scatterer_phases(scene)
    for k in range(frame_count(scene, cfg)):
        yield synthesize_csi(scene, cfg, k, mask=mask, phases=phases, dtype=dtype)


def generate_dataset(scene: Scene, cfg: SystemConfig, dtype=np.complex128) -> list[CsiFrame]:
    return list(iter_dataset(scene, cfg, dtype=dtype))


def amplitude_for_snr(snr_db: float, cfg: SystemConfig, noise_power: float) -> float:
    """Scatterer amplitude giving ``snr_db`` at the periodogram peak (coherent gain N * M_DL)."""
    gain = cfg.subcarrier_count * build_tdd_mask(cfg).popcount
    return math.sqrt(10 ** (snr_db / 10) * noise_power / gain)


def load_scene(path) -> Scene:
    doc = load_yaml(path)
    check_sections(doc, ("scene",), str(path))
    return from_mapping(Scene, doc.get("scene"), "scene")


def scene_to_mapping(scene: Scene) -> dict:
    from .config import to_mapping
    return {"scene": to_mapping(scene)}


def truth_track(scene: Scene, cfg: SystemConfig, index: int = 0) -> np.ndarray:
    """(range, measured speed) of scatterer ``index`` for every frame of the scene."""
    s = scene.scatterers[index]
    sign = -1.0 if s.nlos else 1.0
    out = []
    for k in range(frame_count(scene, cfg)):
        r, v = trajectory_state(s, k * cfg.frame_duration_s)
        out.append((r, sign * v))
    return np.array(out)


def moving_scatterer_indices(scene: Scene) -> Sequence[int]:
    return [i for i, s in enumerate(scene.scatterers) if s.kind == "moving"]

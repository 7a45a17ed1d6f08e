"""Reference synthetic scenarios used by the experiment scripts and acceptance tests.

The room: a LOS blocker at 15.7 m, the main reflector (NLOS boundary) at 23 m
and a static rack at 32 m in the NLOS area.  An intruder paces between 30 m
and 36 m behind the reflector.  All SNRs are peak periodogram SNRs (dB).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .core import SystemConfig
from .scene import Scatterer, Scene, amplitude_for_snr
from .sensing import CfarConfig, SensingConfig

RUNNER_SPEED = 1.67
WALKER_SPEED = 0.9


@dataclass(frozen=True)
class RoomLayout:
    blocker_range_m: float = 15.7
    blocker_snr_db: float = 30.0
    reflector_range_m: float = 23.0
    reflector_snr_db: float = 35.0
    rack_range_m: float = 32.0
    rack_snr_db: float = 31.5
    target_snr_db: float = 25.0
    path_m: tuple = (30.0, 36.0)
    max_range_m: float = 60.0
    noise_power: float = 1.0
    duration_s: float = 10.0


# CA-CFAR at P_fa = 1e-4 leaves several noise peaks per frame in the NLOS area;
# 1e-7 brings sensing false peaks well below the injected clutter rate.
SCENARIO_SENSING = SensingConfig(cfar=CfarConfig(probability_of_false_alarm=1e-7))


def room_scene(speed_mps: float | None, seed: int, layout: RoomLayout = RoomLayout(),
               cfg: SystemConfig = SystemConfig()) -> Scene:
    """The room with an intruder at ``speed_mps`` (None: empty room)."""
    amp = lambda db: amplitude_for_snr(db, cfg, layout.noise_power)
    scs = [
        Scatterer(initial_range_m=layout.blocker_range_m, amplitude=amp(layout.blocker_snr_db),
                  name="blocker"),
        Scatterer(initial_range_m=layout.reflector_range_m,
                  amplitude=amp(layout.reflector_snr_db), name="reflector"),
        Scatterer(initial_range_m=layout.rack_range_m, amplitude=amp(layout.rack_snr_db),
                  nlos=True, name="rack"),
    ]
    if speed_mps is not None:
        start, turn = layout.path_m
        scs.append(Scatterer(kind="moving", initial_range_m=start, radial_speed_mps=speed_mps,
                             waypoints_m=(turn, start), amplitude=amp(layout.target_snr_db),
                             nlos=True, name="intruder"))
    return Scene(scatterers=tuple(scs), noise_power=layout.noise_power,
                 nlos_boundary_range_m=layout.reflector_range_m, duration_s=layout.duration_s,
                 seed=seed, max_range_m=layout.max_range_m)


def runner_scene(seed: int = 11, **kw) -> Scene:
    return room_scene(RUNNER_SPEED, seed, **kw)


def walker_scene(seed: int = 12, **kw) -> Scene:
    return room_scene(WALKER_SPEED, seed, **kw)


def empty_scene(seed: int = 13, **kw) -> Scene:
    return room_scene(None, seed, **kw)


def with_duration(scene: Scene, duration_s: float) -> Scene:
    return replace(scene, duration_s=duration_s)

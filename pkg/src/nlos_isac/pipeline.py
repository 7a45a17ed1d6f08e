"""Pipeline configuration document and frame -> peak-stream plumbing."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, check_sections, from_mapping, load_yaml, to_mapping
from .core import SystemConfig
from .evaluation import ClutterConfig
from .kf import KfConfig
from .phd import PhdConfig
from .scene import CsiFrame, Scene, iter_dataset
from .sensing import CfarConfig, Detector, Peak, SensingConfig

SECTIONS = ("system", "sensing", "kf", "phd", "clutter")
CACHE_ENV = "NLOS_ISAC_CACHE"


@dataclass(frozen=True)
class PipelineConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    kf: KfConfig = field(default_factory=KfConfig)
    phd: PhdConfig = field(default_factory=PhdConfig)
    clutter: ClutterConfig = field(default_factory=ClutterConfig)

    @classmethod
    def from_document(cls, doc: dict, where: str = "pipeline") -> "PipelineConfig":
        check_sections(doc, SECTIONS, where)
        sensing = dict(doc.get("sensing") or {})
        if "cfar" in sensing:
            sensing["cfar"] = from_mapping(CfarConfig, sensing["cfar"], "sensing.cfar")
        return cls(
            system=from_mapping(SystemConfig, doc.get("system"), "system"),
            sensing=from_mapping(SensingConfig, sensing, "sensing"),
            kf=from_mapping(KfConfig, doc.get("kf"), "kf"),
            phd=from_mapping(PhdConfig, doc.get("phd"), "phd"),
            clutter=from_mapping(ClutterConfig, doc.get("clutter"), "clutter"),
        )

    def to_document(self) -> dict:
        return {name: to_mapping(getattr(self, name)) for name in SECTIONS}

    def tracker_params(self, kind: str):
        if kind == "kf":
            return self.kf
        if kind == "phd":
            return self.phd
        raise ConfigError(f"unknown tracker kind {kind!r} (expected kf or phd)")


def load_pipeline(path=None) -> PipelineConfig:
    """Defaults when ``path`` is None; a file may hold any subset of the sections."""
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_document(load_yaml(path), str(path))


def load_system(path=None) -> SystemConfig:
    """System numerology from a file with a ``system`` section (or a full pipeline file)."""
    return load_pipeline(path).system


def detector_for(scene_or_bounds, cfg: SystemConfig, sensing: SensingConfig) -> Detector:
    if isinstance(scene_or_bounds, Scene):
        boundary, max_range = scene_or_bounds.nlos_boundary_range_m, scene_or_bounds.max_range_m
    else:
        boundary, max_range = scene_or_bounds
    return Detector(cfg, sensing, boundary, max_range)


def detect_frames(frames: Iterable[CsiFrame], detector: Detector) -> list[list[Peak]]:
    return [detector(fr) for fr in frames]


def _digest(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def stream_to_arrays(stream: Sequence[Sequence[Peak]]) -> dict:
    rows = [(k, p.range_m, p.speed_mps, p.power, p.range_bin, p.doppler_bin)
            for k, peaks in enumerate(stream) for p in peaks]
    a = np.array(rows, dtype=float).reshape(-1, 6)
    return {"frames": np.array([len(stream)]), "peaks": a}


def stream_from_arrays(data) -> list[list[Peak]]:
    n = int(data["frames"][0])
    out: list[list[Peak]] = [[] for _ in range(n)]
    for k, r, v, pw, rb, db in data["peaks"]:
        out[int(k)].append(Peak(float(r), float(v), float(pw), int(rb), int(db)))
    return out


def scene_peak_stream(scene: Scene, cfg: SystemConfig, sensing: SensingConfig,
                      cache_dir=None) -> list[list[Peak]]:
    """Synthesize every frame of ``scene`` and run the detector on it.

    Frames are synthesized in complex64, as stored in CSIF files.  With
    ``cache_dir`` (or the ``NLOS_ISAC_CACHE`` environment variable) the stream
    is memoised on disk, keyed by the full scene/system/sensing configuration.
    """
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    path = None
    if cache_dir:
        key = _digest(to_mapping(scene), to_mapping(cfg), to_mapping(sensing))
        path = Path(cache_dir) / f"peaks_{key}.npz"
        if path.exists():
            with np.load(path) as data:
                return stream_from_arrays(data)
    det = detector_for(scene, cfg, sensing)
    stream = detect_frames(iter_dataset(scene, cfg, dtype=np.complex64), det)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **stream_to_arrays(stream))
        os.replace(tmp, path)
    return stream

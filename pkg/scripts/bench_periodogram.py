"""Per-stage timing of the sensing chain on full-size frames.

    python scripts/bench_periodogram.py --frames 5
"""
import argparse
import time

import numpy as np

from nlos_isac.core import SystemConfig
from nlos_isac.scenarios import SCENARIO_SENSING, runner_scene
from nlos_isac.scene import synthesize_csi
from nlos_isac.sensing import Detector, cfar_detect, discard_static, nlos_filter, reject_tdd_replicas


def bench(det: Detector, frames):
    stages = {"periodogram": [], "cfar": [], "replicas": [], "gating": []}
    for fr in frames:
        t0 = time.perf_counter()
        img = det.image(fr)
        t1 = time.perf_counter()
        cells = cfar_detect(img, det.sensing.cfar)
        t2 = time.perf_counter()
        peaks = reject_tdd_replicas(cells, img, det.cfg, det.model, det.sensing)
        t3 = time.perf_counter()
        nlos_filter(discard_static(peaks, det.speed_gate), det.boundary, det.max_range)
        t4 = time.perf_counter()
        for key, dt in zip(stages, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
            stages[key].append(dt)
    return {k: float(np.median(v)) for k, v in stages.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=5)
    args = ap.parse_args()
    cfg = SystemConfig()
    scene = runner_scene()
    frames = [synthesize_csi(scene, cfg, k, dtype=np.complex64) for k in range(args.frames)]
    for label, det in (("full image", Detector(cfg, SCENARIO_SENSING, 23.0)),
                       ("row window", Detector(cfg, SCENARIO_SENSING, 23.0, 60.0))):
        det(frames[0])  # warm-up
        t = bench(det, frames)
        parts = "  ".join(f"{k} {v * 1e3:6.1f} ms" for k, v in t.items())
        print(f"{label:10s}  {parts}  total {sum(t.values()) * 1e3:6.1f} ms")


if __name__ == "__main__":
    main()

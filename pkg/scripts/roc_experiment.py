"""ROC curves of both trackers on the runner and walker rooms.

Synthesizes the three reference scenes (about a minute per 1000-frame scene),
injects clutter, sweeps each tracker's threshold for every window length and
writes ``roc.csv`` plus one ``roc_<tracker>_<ms>ms.dat`` x/y file per curve.

    python scripts/roc_experiment.py --out results/roc --window-ms 80 100 300
"""
import argparse
import time
from pathlib import Path

from nlos_isac.core import SystemConfig
from nlos_isac.evaluation import (ClutterConfig, WindowSpec, fn_at_fp, inject_clutter,
                                  plot_data_name, roc_sweep, write_plot_data, write_roc_csv)
from nlos_isac.pipeline import scene_peak_stream
from nlos_isac.scenarios import SCENARIO_SENSING, empty_scene, runner_scene, walker_scene

GRIDS = {
    "kf": [10, 13, 15, 17, 20, 25, 30, 40, 60, 90, 150],
    "phd": [1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/roc"))
    ap.add_argument("--window-ms", type=float, nargs="+", default=[300.0])
    ap.add_argument("--clutter-rate", type=float, default=0.8)
    ap.add_argument("--clutter-seed", type=int, default=1)
    ap.add_argument("--cache", help="directory for memoised peak streams")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    cfg = SystemConfig()
    clutter = ClutterConfig(rate=args.clutter_rate, seed=args.clutter_seed)
    streams = {}
    for name, scene in (("runner", runner_scene()), ("walker", walker_scene()),
                        ("empty", empty_scene())):
        t0 = time.perf_counter()
        streams[name] = scene_peak_stream(scene, cfg, SCENARIO_SENSING, args.cache)
        print(f"{name}: {len(streams[name])} frames in {time.perf_counter() - t0:.0f} s")
    fp = inject_clutter(streams["empty"], clutter, stream=1)

    rows = []
    for scenario in ("runner", "walker"):
        tp = inject_clutter(streams[scenario], clutter, stream=0)
        for kind, grid in GRIDS.items():
            for ms in args.window_ms:
                points = roc_sweep(tp, fp, kind, grid, WindowSpec(ms / 1e3))
                rows += [(f"{kind}:{scenario}", ms, p) for p in points]
                name = plot_data_name(f"{kind}_{scenario}", ms)
                write_plot_data(args.out / name, points)
                summary = " ".join(f"{fn_at_fp(points, lv):.3f}" for lv in (0.01, 0.05, 0.1))
                print(f"{scenario:6s} {kind:3s} {ms:4.0f} ms  FN at FP 1/5/10 %: {summary}")
    write_roc_csv(args.out / "roc.csv", rows)
    print(f"wrote {args.out / 'roc.csv'}")


if __name__ == "__main__":
    main()

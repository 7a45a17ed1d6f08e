"""``nlos-isac`` command line: simulate -> detect -> track -> roc, or ``run`` end to end.

Every command writes its outputs atomically into ``--out`` together with a
``manifest.json`` recording argv, config paths, seeds, version and output hashes.
``nlos-isac replay manifest.json`` re-executes a recorded command.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, publish
from .core import build_tdd_mask
from .csif import DataFormatError, read_header, iter_frames, write_dataset
from .evaluation import (WindowSpec, inject_clutter, plot_data_name, roc_sweep,
                         write_plot_data, write_roc_csv)
from .kf import run_kf, write_track_log
from .phd import run_phd, write_estimates
from .pipeline import PipelineConfig, load_pipeline
from .scene import frame_count, iter_dataset, load_scene
from .sensing import Detector, read_peaks_csv, write_peaks_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

DEFAULT_GRIDS = {
    "kf": "10,13,15,17,20,25,30,40,60,90",
    "phd": "1e-9,1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2",
}


@contextmanager
def atomic_path(path: Path):
    """Yield a temporary sibling of ``path``; rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        publish(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, args, argv, seeds: dict, outputs: list[Path]):
    named = (("scene", getattr(args, "scene", None)), ("fp_scene", getattr(args, "fp_scene", None)),
             ("config", args.config), ("system", args.system))
    configs = {k: str(Path(v).resolve()) for k, v in named if v}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "tool_version": __version__,
        "config_paths": configs,
        "seeds": seeds,
        "output_dir": str(out.resolve()),
        "outputs": {p.name: sha256_of(p) for p in outputs},
    }
    with atomic_path(out / "manifest.json") as tmp:
        tmp.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


# --------------------------------------------------------------------------- helpers

def _pipeline(args) -> PipelineConfig:
    pipe = load_pipeline(args.config)
    if args.system:
        pipe = replace(pipe, system=load_pipeline(args.system).system)
    if getattr(args, "clutter_rate", None) is not None:
        pipe = replace(pipe, clutter=replace(pipe.clutter, rate=args.clutter_rate))
    if getattr(args, "seed", None) is not None:
        pipe = replace(pipe, clutter=replace(pipe.clutter, seed=args.seed))
    return pipe


def _scene(path, seed, cfg):
    scene = load_scene(path)
    if seed is not None:
        scene = replace(scene, seed=seed)
    scene.validate(cfg)
    return scene


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from exc
    if not grid:
        raise ConfigError("--grid is empty")
    return grid


def _window(ms: float, pipe: PipelineConfig) -> WindowSpec:
    return WindowSpec(window_s=ms / 1e3, frame_interval_s=pipe.system.frame_duration_s)


def _open_dataset(path, pipe: PipelineConfig):
    with open(path, "rb") as fh:
        header, mask = read_header(fh)
    if not header.matches(pipe.system):
        raise DataFormatError(f"{path}: numerology N={header.subcarrier_count}, "
                              f"M={header.symbol_count} does not match the system config")
    return header, mask


def _peaks_or_data_error(path, frame_count=None):
    try:
        return read_peaks_csv(path, frame_count)
    except (ValueError, KeyError) as exc:
        raise DataFormatError(str(exc)) from exc


# --------------------------------------------------------------------------- stages

def simulate(scene, pipe: PipelineConfig, out: Path) -> Path:
    cfg = pipe.system
    path = out / "dataset.csif"
    write_dataset(path, iter_dataset(scene, cfg, dtype=np.complex64), cfg,
                  frame_count(scene, cfg), build_tdd_mask(cfg))
    return path


def detect(dataset: Path, pipe: PipelineConfig, boundary: float, max_range, out: Path) -> Path:
    _, mask = _open_dataset(dataset, pipe)
    det = Detector(pipe.system, pipe.sensing, boundary, max_range, mask=mask)
    stream = [det(fr) for fr in iter_frames(dataset, pipe.system.frame_duration_s)]
    path = out / "peaks.csv"
    with atomic_path(path) as tmp:
        write_peaks_csv(tmp, stream, pipe.system.frame_duration_s)
    return path


def track(peaks_path: Path, kind: str, pipe: PipelineConfig, out: Path,
          frames: int | None = None) -> list[Path]:
    stream = _peaks_or_data_error(peaks_path, frames)
    T_f = pipe.system.frame_duration_s
    if kind == "kf":
        alarms, log = run_kf(stream, pipe.kf)
        main = out / "tracks.csv"
        with atomic_path(main) as tmp:
            write_track_log(tmp, log)
    else:
        results = run_phd(stream, pipe.phd)
        alarms = [a for a, _, _ in results]
        main = out / "estimates.csv"
        with atomic_path(main) as tmp:
            write_estimates(tmp, results)
    decisions = out / "decisions.csv"
    with atomic_path(decisions) as tmp:
        with open(tmp, "w") as fh:
            fh.write("frame_index,t_s,decision\n")
            for k, a in enumerate(alarms):
                fh.write(f"{k},{k * T_f:.6f},{int(a)}\n")
    return [main, decisions]


def roc(tp_peaks: Path, fp_peaks: Path | None, kind: str, grid, window_ms: float,
        pipe: PipelineConfig, out: Path, tp_frames: int | None = None,
        fp_frames: int | None = None) -> list[Path]:
    """FP dataset: ``fp_peaks`` plus clutter, or clutter alone when ``fp_peaks`` is None."""
    spec = _window(window_ms, pipe)
    tp = _peaks_or_data_error(tp_peaks, tp_frames)
    fp = _peaks_or_data_error(fp_peaks, fp_frames) if fp_peaks else [[] for _ in tp]
    tp = inject_clutter(tp, pipe.clutter, stream=0)
    fp = inject_clutter(fp, pipe.clutter, stream=1)
    points = roc_sweep(tp, fp, kind, grid, spec, base=pipe.tracker_params(kind))
    path = out / "roc.csv"
    with atomic_path(path) as tmp:
        write_roc_csv(tmp, [(kind, window_ms, p) for p in points])
    dat = out / plot_data_name(kind, window_ms)
    with atomic_path(dat) as tmp:
        write_plot_data(tmp, points)
    return [path, dat]


# --------------------------------------------------------------------------- commands

def cmd_simulate(args, pipe):
    scene = _scene(args.scene, args.seed, pipe.system)
    return [simulate(scene, pipe, args.out)], {"scene": scene.seed}


def _bounds(args):
    if args.scene:
        scene = load_scene(args.scene)
        return scene.nlos_boundary_range_m, scene.max_range_m
    return args.nlos_boundary_m, args.max_range_m


def cmd_detect(args, pipe):
    boundary, max_range = _bounds(args)
    return [detect(Path(args.dataset), pipe, boundary, max_range, args.out)], {}


def cmd_track(args, pipe):
    return track(Path(args.peaks), args.tracker, pipe, args.out, args.frames), {}


def cmd_roc(args, pipe):
    grid = _parse_grid(args.grid or DEFAULT_GRIDS[args.tracker])
    fp = Path(args.fp) if args.fp else None
    outs = roc(Path(args.tp), fp, args.tracker, grid, args.window_ms, pipe, args.out,
               args.frames, args.frames)
    return outs, {"clutter": pipe.clutter.seed,
                  "fp_dataset": "peaks+clutter" if fp else "clutter-only"}


def cmd_run(args, pipe):
    """simulate + detect for the TP (and optional FP) scene, then roc."""
    grid = _parse_grid(args.grid or DEFAULT_GRIDS[args.tracker])
    _window(args.window_ms, pipe)
    outs, seeds = [], {"clutter": pipe.clutter.seed}
    peak_files, frames = {}, {}
    for tag, path in (("tp", args.scene), ("fp", args.fp_scene)):
        if not path:
            continue
        sub = args.out / tag
        sub.mkdir(parents=True, exist_ok=True)
        scene = _scene(path, args.seed if tag == "tp" else None, pipe.system)
        seeds[f"{tag}_scene"] = scene.seed
        frames[tag] = frame_count(scene, pipe.system)
        data = simulate(scene, pipe, sub)
        peaks = detect(data, pipe, scene.nlos_boundary_range_m, scene.max_range_m, sub)
        outs += [data, peaks]
        peak_files[tag] = peaks
    outs += roc(peak_files["tp"], peak_files.get("fp"), args.tracker, grid, args.window_ms,
                pipe, args.out, frames["tp"], frames.get("fp"))
    seeds["fp_dataset"] = "peaks+clutter" if "fp" in peak_files else "clutter-only"
    return outs, seeds


def cmd_replay(args, _pipe):
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    if args.out:
        i = argv.index("--out")
        argv[i + 1] = str(args.out)
    cwd = os.getcwd()
    os.chdir(manifest.get("cwd", cwd))
    try:
        code = main(argv)
    finally:
        os.chdir(cwd)
    if code != EXIT_OK:
        raise SystemExit(code)
    return [], None


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "track": cmd_track,
            "roc": cmd_roc, "run": cmd_run, "replay": cmd_replay}


FRAMES_HELP = ("frame count of the dataset; peaks CSVs carry no row for frames without "
               "peaks, so trailing empty frames are lost unless given here")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlos-isac", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="pipeline YAML (system/sensing/kf/phd/clutter sections)")
        sp.add_argument("--system", help="YAML with a system section; overrides --config's")
        if out:
            sp.add_argument("--out", type=Path, required=True, help="output directory")

    sp = sub.add_parser("simulate", help="scene -> CSIF dataset")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--seed", type=int, help="override the scene seed")
    common(sp)

    sp = sub.add_parser("detect", help="CSIF dataset -> moving NLOS peaks CSV")
    sp.add_argument("dataset")
    sp.add_argument("--scene", help="scene YAML supplying the NLOS boundary and max range")
    sp.add_argument("--nlos-boundary-m", type=float, default=0.0)
    sp.add_argument("--max-range-m", type=float, default=None)
    common(sp)

    sp = sub.add_parser("track", help="peaks CSV -> track/estimate log + decisions")
    sp.add_argument("peaks")
    sp.add_argument("--tracker", choices=("kf", "phd"), required=True)
    sp.add_argument("--frames", type=int, help=FRAMES_HELP)
    common(sp)

    sp = sub.add_parser("roc", help="TP/FP peaks -> ROC CSV + plot data")
    sp.add_argument("--tp", required=True, help="peaks CSV of the TP dataset")
    sp.add_argument("--fp", help="peaks CSV of the FP dataset (default: clutter only)")
    sp.add_argument("--tracker", choices=("kf", "phd"), required=True)
    sp.add_argument("--grid", help="comma-separated sigma_r^2 (kf) or w_B (phd) values")
    sp.add_argument("--window-ms", type=float, default=300.0)
    sp.add_argument("--clutter-rate", type=float)
    sp.add_argument("--seed", type=int, help="clutter seed")
    sp.add_argument("--frames", type=int, help=FRAMES_HELP)
    common(sp)

    sp = sub.add_parser("run", help="end to end: simulate, detect, roc")
    sp.add_argument("--scene", required=True, help="TP scene")
    sp.add_argument("--fp-scene", help="FP scene (default: clutter only)")
    sp.add_argument("--tracker", choices=("kf", "phd"), required=True)
    sp.add_argument("--grid")
    sp.add_argument("--window-ms", type=float, default=300.0)
    sp.add_argument("--clutter-rate", type=float)
    sp.add_argument("--seed", type=int, help="TP scene seed and clutter seed")
    common(sp)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", type=Path, help="write to another directory")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            cmd_replay(args, None)
            return EXIT_OK
        pipe = _pipeline(args)
        args.out.mkdir(parents=True, exist_ok=True)
        outputs, seeds = COMMANDS[args.command](args, pipe)
        write_manifest(args.out, args, argv, seeds, outputs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

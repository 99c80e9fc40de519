"""``rawaug`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error.  Errors go
to stderr as one JSON line.  Subcommands that take ``--config`` read a JSON
object first; explicit flags override its keys.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import augment as aug
from .calibration import CalibrationError, PatchRegion, RansacConfig, calibrate
from .isp import ToneCurve, develop
from .kernels import BlurKernel
from .noise_model import NoiseModel
from .raw_core import Burst, RawFrame, load_burst, load_frame, save_burst, save_frame
from .rng import NOISE, SPEC, parallel_map, stream
from .sensor_sim import (SceneMap, SensorSpec, blurred_scene, capture_burst,
                         color_checker_scene, exposure_for, ramp_scene, uniform_scene)
from .stats import ConsensusError, DegenerateInputError
from . import validate as val

log = logging.getLogger("rawaug")

DATA_ERRORS = (ValueError, OSError, KeyError, ConsensusError, DegenerateInputError,
               CalibrationError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        sys.exit(1)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


# --- small parsing helpers ---------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 64x64, got {text!r}")
    return h, w


def _read_json(path) -> dict:
    if path is None:
        return {}
    d = json.loads(Path(path).read_text())
    if not isinstance(d, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return d


def _merged(args, config: dict, keys: dict) -> dict:
    """Config values overridden by any flag the user actually passed."""
    out = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else config.get(key, default)
    return out


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _threads(args) -> int:
    t = getattr(args, "threads", 1)
    if t == 0:
        return os.cpu_count() or 1
    return max(1, t)


def _sensor(args, params: dict | None = None) -> SensorSpec:
    d = dict((params or {}).get("sensor", {}))
    d.update(_read_json(getattr(args, "sensor", None)))
    if getattr(args, "model", None):
        d["model"] = NoiseModel.load(args.model).to_dict()
    elif params and "model" in params:
        d["model"] = params["model"]
    else:
        raise ValueError("no noise model: pass --model or put 'model' in --params")
    return SensorSpec.from_dict(d)


def _scene(kind: str, size, patch_size: int, cfa: str) -> SceneMap:
    if kind == "chart":
        return color_checker_scene(patch_size=patch_size, cfa=cfa)
    size = size or (64, 64)
    if kind == "ramp":
        return ramp_scene(size, cfa=cfa)
    if kind == "uniform":
        return uniform_scene(size, 1000.0, cfa)
    raise ValueError(f"unknown scene {kind!r}")


def _regions(scene: SceneMap) -> list[PatchRegion]:
    if scene.layout is not None:
        return scene.patch_regions(min(24, scene.patch_size))
    return [PatchRegion((0, 0), scene.shape)]


def _exposed(scene: SceneMap, spec: SensorSpec, gain: float, fill: float) -> SceneMap:
    return scene.scaled(exposure_for(spec, gain, scene, fill))


def _load_input(path) -> Burst | RawFrame:
    p = Path(path)
    return load_burst(p) if p.is_dir() else load_frame(p)


# --- subcommands ---------------------------------------------------------------

_SIM_KEYS = {"scene": "chart", "size": None, "patch_size": 32, "frames": 100, "gain": 12.0,
             "fill": 0.5, "gains": [6.0, 12.0, 24.0], "fills": [0.3, 0.03], "distance": 2,
             "direction": "horizontal"}


def cmd_simulate(args) -> int:
    params = _read_json(args.params)
    c = _merged(args, params, _SIM_KEYS)
    if isinstance(c["size"], str):
        c["size"] = _size(c["size"])
    spec = _sensor(args, params)
    scene = _scene(c["scene"], c["size"], c["patch_size"], spec.cfa)
    out = Path(args.out)
    threads = _threads(args)
    if args.what == "calibration-set":
        bursts = []
        regions = _regions(scene)
        for gi, gdb in enumerate(c["gains"]):
            for li, fill in enumerate(c["fills"]):
                sub = f"g{gi}_l{li}"
                b = capture_burst(_exposed(scene, spec, gdb, fill), gdb, spec, c["frames"],
                                  seed=args.seed, key=(gi, li), threads=threads)
                save_burst(b, out / sub)
                bursts.append({"path": sub, "gain_db": gdb, "fill": fill})
        _write_json(out / "manifest.json", {"bursts": bursts,
                                            "regions": [r.to_dict() for r in regions],
                                            "sensor": spec.to_dict(), "seed": args.seed})
        print(json.dumps({"bursts": len(bursts), "out": str(out)}))
        return 0

    lit = _exposed(scene, spec, c["gain"], c["fill"])
    if args.what == "blur":
        lit = blurred_scene(lit, BlurKernel.linear(c["distance"], c["direction"]))
    meta = {"scene": c["scene"], "gain_db": c["gain"], "fill": c["fill"],
            "sensor": spec.to_dict(), "regions": [r.to_dict() for r in _regions(scene)]}
    if args.what == "scene":
        out.mkdir(parents=True, exist_ok=True)
        np.save(out / "scene.npy", lit.u_bar)
        _write_json(out / "scene.json", meta)
        print(json.dumps({"shape": list(lit.shape), "out": str(out)}))
        return 0
    b = capture_burst(lit, c["gain"], spec, c["frames"], seed=args.seed, threads=threads)
    save_burst(b, out)
    _write_json(out / "scene.json", meta)
    print(json.dumps({"frames": len(b), "out": str(out)}))
    return 0


def cmd_calibrate(args) -> int:
    cfg_file = _read_json(args.config)
    ransac = dict(cfg_file.get("ransac", {}))
    for key in ("iterations", "refine", "residual", "threshold_sigmas"):
        if getattr(args, key) is not None:
            ransac[key] = getattr(args, key)
    cfg = RansacConfig.from_dict(ransac)

    if args.input:
        root = Path(args.input)
        manifest = _read_json(root / "manifest.json")
        bursts = [load_burst(root / b["path"]) for b in manifest["bursts"]]
        region_data = manifest["regions"]
    else:
        bursts = [load_burst(d) for d in args.bursts]
        region_data = None
    if args.regions:
        region_data = json.loads(Path(args.regions).read_text())
    if not region_data:
        raise ValueError("no regions: pass --regions or use a calibration-set directory")
    if isinstance(region_data[0], list):
        regions = [[PatchRegion.from_dict(r) for r in lst] for lst in region_data]
    else:
        regions = [PatchRegion.from_dict(r) for r in region_data]
    report, pooled = calibrate(bursts, regions, cfg, seed=args.seed, threads=_threads(args),
                               keep_pairs=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.model.save(out)
    rep_path = Path(args.report) if args.report else out.with_name(out.stem + "_report.json")
    _write_json(rep_path, report.to_dict())
    if not args.no_figures:
        from .figures import calibration_figure
        calibration_figure(report, pooled, out.with_name(out.stem + "_calibration.png"))
    print(json.dumps(report.to_dict()["model"]))
    return 0


def cmd_augment(args) -> int:
    cfg_d = _read_json(args.config)
    if args.gain_range is not None:
        cfg_d["gain_range_db"] = args.gain_range
    cfg = aug.AugmentConfig.from_dict(cfg_d)
    model = NoiseModel.load(args.model)
    src = _load_input(args.input)
    frames = list(src) if isinstance(src, Burst) else [src]
    seed, mode = args.seed, args.mode

    def one(i):
        f = frames[i]
        spec = aug.sample_spec(cfg, stream(seed, SPEC, i), f.gain_db, seed, f.pixels.shape)
        report: dict = {}
        res = aug.augment_frame(f, model, spec, stream(seed, NOISE, i), mode, report)
        return spec, report, res

    results = parallel_map(one, range(len(frames)), _threads(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (spec, report, res) in enumerate(results):
        stem = f"frame_{i:04d}"
        if mode == "ksigma":
            np.save(out / f"{stem}_ksigma.npy", res.values)
            save_frame(res.source, out / f"{stem}.raw16")
            extra = {"k": res.k, "b": res.b}
        elif mode == "varmap":
            frame, vmap = res
            save_frame(frame, out / f"{stem}.raw16")
            np.save(out / f"{stem}_var.npy", vmap)
            extra = {}
        else:
            save_frame(res, out / f"{stem}.raw16")
            extra = {}
        records.append({"frame": i, "spec": spec.to_dict(), "counts": report, **extra})
    _write_json(out / "augment.json", {"mode": mode, "seed": seed, "config": cfg.to_dict(),
                                       "frames": records})
    print(json.dumps({"frames": len(records), "mode": mode, "out": str(out)}))
    return 0


def cmd_develop(args) -> int:
    curve = ToneCurve.from_json(args.curve) if args.curve else ToneCurve()
    frame = load_frame(args.input)
    img = develop(frame, curve)
    path = img.save(args.out)
    print(json.dumps({"out": str(path), "width": img.width, "height": img.height}))
    return 0


_VALIDATE_KEYS = {"gain": 24.0, "fill": 0.7, "frames": 100, "scene": "chart", "size": None,
                  "patch_size": 32}


def cmd_validate(args) -> int:
    cfg_file = _read_json(args.config)
    c = _merged(args, cfg_file, _VALIDATE_KEYS)
    if isinstance(c["size"], str):
        c["size"] = _size(c["size"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    figures = not args.no_figures
    if figures:
        from .figures import alignment_figure, normality_figure
    threads = _threads(args)

    if args.what == "normality":
        if args.input:
            burst = load_burst(args.input)
        else:
            spec = _sensor(args)
            scene = _scene(c["scene"], c["size"], c["patch_size"], spec.cfa)
            burst = capture_burst(_exposed(scene, spec, c["gain"], c["fill"]), c["gain"], spec,
                                  c["frames"], seed=args.seed, threads=threads)
        sweep = val.normality_report(burst, args.buckets or cfg_file.get("buckets", 10))
        val.write_normality_csv(sweep, out / "normality.csv")
        val.write_normality_points(sweep, out / "normality_points.csv")
        summary = {"buckets": sweep.buckets, "zero_variance": sweep.zero_variance,
                   "pass_fraction_mean_gt_100": sweep.pass_fraction(min_mean=100.0)}
        _write_json(out / "normality.json", summary)
        if figures:
            normality_figure(sweep, out / "normality.png")
        print(json.dumps({"pass_fraction_mean_gt_100": summary["pass_fraction_mean_gt_100"]}))
        return 0

    spec = _sensor(args)
    aug_model = NoiseModel.load(args.aug_model) if args.aug_model else None
    scene = _exposed(_scene(c["scene"], c["size"], c["patch_size"], spec.cfa), spec,
                     c["gain"], c["fill"])
    if args.what == "alignment":
        contrasts = args.contrast or cfg_file.get("contrast", [0.1, 0.5])
        methods = args.methods or cfg_file.get("methods", list(val.COLOR_METHODS))
        reports = val.alignment_grid(spec, scene, c["gain"], contrasts, methods, c["frames"],
                                     args.seed, aug_model, threads)
    else:
        kernel = BlurKernel.linear(args.distance if args.distance is not None
                                   else cfg_file.get("distance", 2),
                                   args.direction or cfg_file.get("direction", "horizontal"))
        modes = args.modes or cfg_file.get("modes", list(val.BLUR_MODES))
        reps = parallel_map(
            lambda m: val.blur_alignment_experiment(spec, scene, c["gain"], kernel, m,
                                                    c["frames"], args.seed, aug_model),
            modes, threads)
        reports = {f"blur_{m}": r for m, r in zip(modes, reps)}
    summary = {}
    for job, rep in reports.items():
        rep.write(out, job)
        if figures:
            alignment_figure(rep, out / f"{job}.png")
        summary[job] = {k: v for k, v in rep.to_dict().items()
                        if k in ("slope_rel_err", "intercept_rel_err", "intercept_diff",
                                 "dark_floor_ratio")}
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = _read_json(args.config)
    size = args.size or tuple(cfg.get("frame_size", (512, 512)))
    reps = args.repetitions or int(cfg.get("repetitions", 5))
    model = NoiseModel.load(args.model) if args.model else NoiseModel(1.2, 6.0, 25.0)
    report = val.bench(SensorSpec(model), size, reps, seed=args.seed,
                       config=aug.AugmentConfig.from_dict(cfg.get("augment")))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


# --- parser ------------------------------------------------------------------------

def _globals(defaults: bool) -> argparse.ArgumentParser:
    """Global flags, accepted before or after the subcommand."""
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="root seed (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads, 0 = all cores")
    p.add_argument("-v", "--verbose", action="count", default=d(0))
    return p


def build_parser() -> argparse.ArgumentParser:
    g = _globals(False)
    parser = _Parser(prog="rawaug", parents=[_globals(True)],
                     description="Sensor noise calibration and noise-accounted RAW augmentation.")
    parser.add_argument("--version", action="version", version=f"rawaug {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def sensor_flags(p, required=True):
        p.add_argument("--model", required=required, help="noise model JSON")
        p.add_argument("--sensor", help="sensor JSON (bit_depth, black_level, white_level, ...)")

    def scene_flags(p, defaults=True):
        dv = (lambda v: v) if defaults else (lambda v: None)
        p.add_argument("--scene", choices=("chart", "ramp", "uniform"), default=dv("chart"))
        p.add_argument("--size", type=_size, default=None, help="HxW for ramp/uniform scenes")
        p.add_argument("--patch-size", dest="patch_size", type=int, default=dv(32))

    # simulate
    sp = sub.add_parser("simulate", parents=[g], help="synthetic captures")
    ssub = sp.add_subparsers(dest="what", metavar="KIND")
    for name in ("burst", "blur", "scene", "calibration-set"):
        p = ssub.add_parser(name, parents=[g])
        sensor_flags(p, required=False)
        p.add_argument("--params", help="JSON with model, sensor and any flag below")
        scene_flags(p, defaults=False)
        p.add_argument("--frames", type=int)
        p.add_argument("--out", required=True)
        if name == "calibration-set":
            p.add_argument("--gains", type=_floats)
            p.add_argument("--fills", type=_floats)
        else:
            p.add_argument("--gain", type=float)
            p.add_argument("--fill", type=float)
        if name == "blur":
            p.add_argument("--distance", type=int)
            p.add_argument("--direction", choices=("horizontal", "vertical"))
    sp.set_defaults(func=cmd_simulate)

    # calibrate
    p = sub.add_parser("calibrate", parents=[g], help="fit a noise model from bursts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="directory from simulate calibration-set")
    src.add_argument("--bursts", nargs="+", help="burst directories")
    p.add_argument("--regions", help="JSON list of regions, or one list per burst")
    p.add_argument("--report", help="report JSON path (default: <out>_report.json)")
    p.add_argument("--config", help="JSON with a 'ransac' object")
    p.add_argument("--iterations", type=int)
    p.add_argument("--refine", type=int)
    p.add_argument("--residual", choices=("relative", "absolute"))
    p.add_argument("--threshold-sigmas", dest="threshold_sigmas", type=float)
    p.add_argument("--out", required=True, help="noise model JSON to write")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    # augment
    p = sub.add_parser("augment", parents=[g], help="augment a frame or burst")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config", help="AugmentConfig JSON")
    p.add_argument("--mode", choices=aug.MODES, default="ours")
    p.add_argument("--gain-range", dest="gain_range", type=_floats,
                   help="calibrated gain span in dB, e.g. 6,24")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    # develop
    p = sub.add_parser("develop", parents=[g], help="RAW frame to 8-bit RGB")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--curve", help='e.g. \'{"variant":"simplest","gamma":5}\'')
    p.add_argument("--out", required=True, help=".ppm or .png")
    p.set_defaults(func=cmd_develop)

    # validate
    vp = sub.add_parser("validate", parents=[g], help="oracle comparisons")
    vsub = vp.add_subparsers(dest="what", metavar="EXPERIMENT")
    for name in ("alignment", "blur", "normality"):
        p = vsub.add_parser(name, parents=[g])
        sensor_flags(p, required=name != "normality")
        p.add_argument("--aug-model", dest="aug_model",
                       help="model the augmentation uses (default: the sensor model)")
        scene_flags(p, defaults=False)
        p.add_argument("--config")
        p.add_argument("--gain", type=float)
        p.add_argument("--fill", type=float)
        p.add_argument("--frames", type=int)
        p.add_argument("--out", required=True)
        p.add_argument("--no-figures", action="store_true")
        if name == "alignment":
            p.add_argument("--contrast", type=_floats)
            p.add_argument("--methods", type=_words)
        elif name == "blur":
            p.add_argument("--distance", type=int)
            p.add_argument("--direction", choices=("horizontal", "vertical"))
            p.add_argument("--modes", type=_words)
        else:
            p.add_argument("--in", dest="input", help="burst directory (else simulate one)")
            p.add_argument("--buckets", type=int)
    vp.set_defaults(func=cmd_validate)

    # bench
    p = sub.add_parser("bench", parents=[g], help="operator throughput")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--size", type=_size)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def _check(parser, args) -> None:
    if args.command is None:
        parser.error("a command is required")
    if args.command in ("simulate", "validate") and getattr(args, "what", None) is None:
        parser.error(f"{args.command} needs a kind")
    if args.threads < 0:
        parser.error("--threads must be >= 0")
    if args.command == "validate" and args.what == "normality" and not args.input and not args.model:
        parser.error("validate normality needs --in or --model")
    if args.command == "validate" and args.what != "normality":
        for m in getattr(args, "methods", None) or []:
            if m not in val.COLOR_METHODS:
                parser.error(f"unknown method {m!r}")
        for m in getattr(args, "modes", None) or []:
            if m not in val.BLUR_MODES:
                parser.error(f"unknown blur mode {m!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version exit 0, parse errors exit 1
        return int(exc.code or 0)
    try:
        _check(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

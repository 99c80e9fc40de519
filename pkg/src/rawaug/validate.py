"""Oracle comparisons between augmented bursts and real captures at the target condition.

Every experiment captures a source burst with the simulator, converts it frame
by frame, captures a "real" burst at the condition the conversion pretends to
reach, and compares the two temporal (mean, variance) populations.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import augment as aug
from .calibration import NormalitySweep, PatchRegion, normality_sweep, temporal_stats
from .kernels import BlurKernel
from .raw_core import Burst, RawFrame
from .rng import NOISE, SPEC, parallel_map, stream
from .sensor_sim import SceneMap, SensorSpec, blurred_scene, capture_burst, uniform_scene
from .stats import LineFit, ks_two_sample, ols_line

COLOR_METHODS = ("ours", "wo_prior", "none")
BLUR_MODES = ("noise_accounted", "naive")
MIN_PAIRS = 500

# capture-stream keys, distinct from the calibration keys (gain, fill)
_SOURCE_KEY = 101
_REAL_KEY = 102


class ValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AlignmentReport:
    method: str
    conversion: str
    real_line: LineFit
    converted_line: LineFit
    slope_rel_err: float
    intercept_rel_err: float
    intercept_diff: float
    ks: tuple[float, float]
    real_pairs: np.ndarray = field(repr=False)
    converted_pairs: np.ndarray = field(repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def n_pairs(self) -> int:
        return int(min(len(self.real_pairs), len(self.converted_pairs)))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "conversion": self.conversion,
            "real_line": self.real_line.summary(),
            "converted_line": self.converted_line.summary(),
            "slope_rel_err": self.slope_rel_err,
            "intercept_rel_err": self.intercept_rel_err,
            "intercept_diff": self.intercept_diff,
            "ks": {"D": self.ks[0], "p": self.ks[1]},
            "n_pairs": self.n_pairs,
            **self.extra,
        }

    def write(self, directory: str | os.PathLike, job: str) -> tuple[Path, Path]:
        """``<job>.json`` and ``<job>_pairs.csv`` under ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        jpath, cpath = d / f"{job}.json", d / f"{job}_pairs.csv"
        jpath.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        write_pairs_csv(cpath, self.real_pairs, self.converted_pairs)
        return jpath, cpath


def write_pairs_csv(path, real_pairs: np.ndarray, converted_pairs: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu", "var", "source"])
        for name, pairs in (("real", real_pairs), ("converted", converted_pairs)):
            for mu, var in pairs:
                w.writerow([repr(float(mu)), repr(float(var)), name])


def read_pairs_csv(path) -> dict[str, np.ndarray]:
    out: dict[str, list] = {"real": [], "converted": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["source"], []).append((float(row["mu"]), float(row["var"])))
    return {k: np.asarray(v, dtype=float).reshape(-1, 2) for k, v in out.items()}


def burst_pairs(burst: Burst) -> np.ndarray:
    """All unsaturated per-pixel (mean, variance) pairs of a burst."""
    st = temporal_stats(burst)
    keep = (st.mean < st.saturation) & (st.mean > -st.saturation)
    return np.column_stack([st.mean[keep], st.variance[keep]])


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else (0.0 if a == 0 else math.inf)


def standardized_residuals(pairs: np.ndarray, line: LineFit, n_frames: int) -> np.ndarray:
    """Variance residuals in units of the sampling spread the line predicts."""
    pred = np.maximum(line.predict(pairs[:, 0]), 1e-12)
    return (pairs[:, 1] - pred) / (pred * math.sqrt(2.0 / (n_frames - 1)))


def compare(real: np.ndarray, converted: np.ndarray, n_frames: int, method: str,
            conversion: str, extra: dict | None = None) -> AlignmentReport:
    if min(len(real), len(converted)) < MIN_PAIRS:
        raise ValidationError(f"need >= {MIN_PAIRS} pairs per population")
    rl, cl = ols_line(real), ols_line(converted)
    ks = ks_two_sample(standardized_residuals(real, rl, n_frames),
                       standardized_residuals(converted, rl, n_frames))
    return AlignmentReport(method, conversion, rl, cl, _rel(cl.slope, rl.slope),
                           _rel(cl.intercept, rl.intercept), cl.intercept - rl.intercept,
                           ks, real, converted, dict(extra or {}))


def _convert_burst(burst: Burst, fn, seed: int, threads: int) -> Burst:
    frames = parallel_map(lambda i: fn(burst[i], stream(seed, NOISE, i)), range(len(burst)),
                          threads)
    return Burst(tuple(frames))


def alignment_experiment(spec: SensorSpec, scene: SceneMap, gain, contrast: float,
                         method: str = "ours", n_frames: int = 100, seed: int = 0,
                         model=None, threads: int = 1) -> AlignmentReport:
    """Contrast conversion of a source burst versus a real capture at ``scene * contrast``.

    ``spec.model`` drives the simulator; ``model`` (default: the same) is what
    the augmentation believes, so a calibrated estimate can be plugged in.
    """
    if not 0 < contrast <= 1:
        raise ValidationError(f"contrast must be in (0, 1], got {contrast}")
    if method not in COLOR_METHODS:
        raise ValidationError(f"unknown method {method!r}")
    if n_frames < 50:
        raise ValidationError("alignment needs n_frames >= 50")
    model = spec.model if model is None else model
    src = capture_burst(scene, gain, spec, n_frames, seed=seed, key=(_SOURCE_KEY,), threads=threads)
    real = capture_burst(scene.scaled(contrast), gain, spec, n_frames, seed=seed,
                         key=(_REAL_KEY,), threads=threads)
    aspec = aug.AugmentSpec(p_c_base=contrast, p_c_per_channel=(contrast,) * 3, seed=seed)
    if method == "ours":
        fn = lambda f, r: aug.color_jitter(f, model, aspec, r)  # noqa: E731
    elif method == "wo_prior":
        fn = lambda f, r: aug.wo_prior_color_jitter(f, model, aspec, r)  # noqa: E731
    else:
        fn = lambda f, r: aug.naive_color_jitter(f, aspec)  # noqa: E731
    conv = _convert_burst(src, fn, seed, threads)
    return compare(burst_pairs(real), burst_pairs(conv), n_frames, method,
                   f"contrast x{contrast:g}")


def blur_alignment_experiment(spec: SensorSpec, scene: SceneMap, gain, kernel: BlurKernel,
                              mode: str = "noise_accounted", n_frames: int = 100,
                              seed: int = 0, model=None, threads: int = 1) -> AlignmentReport:
    """Blur augmentation of a source burst versus photon-domain motion-blur captures.

    ``extra['dark_floor_ratio']`` is the converted/real intercept ratio.
    """
    if mode not in BLUR_MODES:
        raise ValidationError(f"unknown blur mode {mode!r}")
    if n_frames < 50:
        raise ValidationError("alignment needs n_frames >= 50")
    model = spec.model if model is None else model
    src = capture_burst(scene, gain, spec, n_frames, seed=seed, key=(_SOURCE_KEY,), threads=threads)
    real = capture_burst(blurred_scene(scene, kernel), gain, spec, n_frames, seed=seed,
                         key=(_REAL_KEY,), threads=threads)
    if mode == "noise_accounted":
        fn = lambda f, r: aug.noise_accounted_blur(f, model, kernel, r)  # noqa: E731
    else:
        fn = lambda f, r: aug.naive_blur(f, kernel)  # noqa: E731
    conv = _convert_burst(src, fn, seed, threads)
    rep = compare(burst_pairs(real), burst_pairs(conv), n_frames, mode,
                  f"blur {len(kernel.weights)}-tap")
    ratio = rep.converted_line.intercept / rep.real_line.intercept
    return AlignmentReport(**{**rep.__dict__, "extra": {"dark_floor_ratio": ratio,
                                                        "kernel": kernel.to_dict()}})


def alignment_grid(spec: SensorSpec, scene: SceneMap, gain, contrasts, methods,
                   n_frames: int = 100, seed: int = 0, model=None,
                   threads: int = 1) -> dict[str, AlignmentReport]:
    """Every (method, contrast) cell; keys look like ``ours_x0.5``."""
    jobs = [(m, c) for m in methods for c in contrasts]
    reports = parallel_map(
        lambda j: alignment_experiment(spec, scene, gain, j[1], j[0], n_frames, seed, model),
        jobs, threads)
    return {f"{m}_x{c:g}": r for (m, c), r in zip(jobs, reports)}


def normality_report(burst: Burst, buckets: int = 10,
                     regions: list[PatchRegion] | None = None, alpha: float = 0.05) -> NormalitySweep:
    return normality_sweep(burst, regions, buckets=buckets, alpha=alpha)


def write_normality_csv(sweep: NormalitySweep, path) -> None:
    rows = sweep.buckets
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("mean_lo,mean_hi,n_pixels\n")
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_normality_points(sweep: NormalitySweep, path) -> None:
    """One (expected value, p-value) row per tested pixel location."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mean", "pvalue", "distinct_levels"])
        for m, p, d in zip(sweep.mean, sweep.pvalue, sweep.distinct):
            w.writerow([repr(float(m)), "" if np.isnan(p) else repr(float(p)), int(d)])


# --- throughput --------------------------------------------------------------

def _bench_frame(spec: SensorSpec, size: tuple[int, int], seed: int) -> RawFrame:
    scene = uniform_scene(size, 200.0, spec.cfa)
    return capture_burst(scene, 12.0, spec, 2, seed=seed).frames[0]


def bench(spec: SensorSpec, frame_size=(512, 512), repetitions: int = 5, seed: int = 0,
          config: aug.AugmentConfig | None = None) -> dict:
    """Median and p95 wall time per operator on one synthetic frame.

    Timings only; nothing here asserts correctness.
    """
    if repetitions < 3:
        raise ValidationError("bench needs repetitions >= 3")
    h, w = frame_size
    frame = _bench_frame(spec, (h, w), seed)
    model = spec.model
    cfg = config or aug.AugmentConfig()
    aspec = aug.sample_spec(cfg, stream(seed, SPEC, 0), frame.gain_db, seed, (h, w))
    jitter = aug.AugmentSpec(p_c_base=0.5, p_c_per_channel=(0.5,) * 3, p_b_hat=0.05)
    kernel = BlurKernel.linear(2)
    ops = {
        "identity": lambda r: aug.augment_frame(frame, model, aug.AugmentSpec(), r),
        "exposure_gain_shift": lambda r: aug.exposure_gain_shift(frame, model, 0.5, 1.0, r),
        "color_jitter": lambda r: aug.color_jitter(frame, model, jitter, r),
        "noise_accounted_blur": lambda r: aug.noise_accounted_blur(frame, model, kernel, r),
        "geometric": lambda r: aug.geometric(frame, aug.AugmentSpec(shift=(4, 2), scale=1.02)),
        "ksigma_forward": lambda r: aug.ksigma_forward(frame, model),
        "end_to_end": lambda r: aug.augment_frame(frame, model, aspec, r),
    }
    mp = h * w / 1e6
    report = {"frame_size": [h, w], "repetitions": repetitions, "operators": {}}
    for name, op in ops.items():
        times = []
        for i in range(repetitions):
            rng = stream(seed, NOISE, i)
            t0 = time.perf_counter()
            op(rng)
            times.append(time.perf_counter() - t0)
        med = float(np.median(times))
        report["operators"][name] = {
            "median_s": med,
            "p95_s": float(np.percentile(times, 95)),
            "megapixels_per_s": mp / med if med > 0 else math.inf,
        }
    return report

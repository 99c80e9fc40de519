"""Noise-model calibration from burst captures.

Pipeline: per-pixel temporal mean/variance for each burst, pooled (mean,
variance) pairs per analog gain, a RANSAC line per gain, then two small
least-squares systems across gains::

    slope_g     = g * alpha
    intercept_g = g**2 * sigma_d2 + sigma_r2
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .noise_model import NoiseModel
from .raw_core import Burst, GainValue
from .rng import parallel_map
from .stats import LineFit, lstsq_through_constraints, ransac_line, shapiro_wilk_columns

log = logging.getLogger(__name__)

SATURATION_MARGIN = 0.02
MIN_NORMALITY_FRAMES = 20


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class PatchRegion:
    origin: tuple[int, int]
    size: tuple[int, int] = (24, 24)

    def check(self, shape) -> None:
        (r, c), (h, w) = self.origin, self.size
        if r < 0 or c < 0 or h <= 0 or w <= 0 or r + h > shape[0] or c + w > shape[1]:
            raise CalibrationError(f"region {self} outside frame of shape {tuple(shape)}")

    def slices(self) -> tuple[slice, slice]:
        (r, c), (h, w) = self.origin, self.size
        return slice(r, r + h), slice(c, c + w)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "size": list(self.size)}

    @classmethod
    def from_dict(cls, d) -> "PatchRegion":
        return cls(tuple(int(v) for v in d["origin"]), tuple(int(v) for v in d.get("size", (24, 24))))


@dataclass(frozen=True, eq=False)
class BurstStats:
    mean: np.ndarray
    variance: np.ndarray
    n_frames: int
    gain_db: float
    # black-subtracted value above which a pixel counts as saturated
    saturation: float = math.inf


@dataclass(frozen=True)
class RansacConfig:
    """RANSAC settings for the per-gain mean-variance line.

    ``residual="relative"`` (default) measures ``|var - line| / line`` and sets
    the band to ``threshold_sigmas`` standard errors of an unbiased variance
    estimate, ``sqrt(2 / (n_frames - 1))``.  ``residual="absolute"`` uses the
    vertical distance with a band of ``threshold_fraction`` times the IQR of
    the variances.  An explicit ``threshold`` overrides either rule.
    """

    iterations: int = 500
    residual: str = "relative"
    threshold: float | None = None
    threshold_sigmas: float = 1.0
    threshold_fraction: float = 0.1
    refine: int = 5

    def __post_init__(self):
        if self.residual not in ("relative", "absolute"):
            raise ValueError(f"residual must be 'relative' or 'absolute', got {self.residual!r}")

    def band(self, variances: np.ndarray, n_frames: int) -> float:
        if self.threshold is not None:
            return float(self.threshold)
        if self.residual == "relative":
            return self.threshold_sigmas * math.sqrt(2.0 / max(n_frames - 1, 1))
        q75, q25 = np.percentile(variances, [75, 25])
        return self.threshold_fraction * float(q75 - q25)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RansacConfig":
        return cls(**(d or {}))


@dataclass(frozen=True, eq=False)
class GainLine:
    gain_db: float
    fit: LineFit
    n_pairs: int = 0

    @property
    def gain(self) -> GainValue:
        return GainValue(self.gain_db)


@dataclass(eq=False)
class CalibrationReport:
    model: NoiseModel
    per_gain: list[GainLine]
    system_r2: tuple[float, float]
    clamped: list[str] = field(default_factory=list)
    normality: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": {"alpha": self.model.alpha, "sigma_d2": self.model.sigma_d2,
                      "sigma_r2": self.model.sigma_r2},
            "per_gain": [{"gain_db": gl.gain_db, "gain_linear": gl.gain.linear,
                          **gl.fit.summary()} for gl in self.per_gain],
            "system_r2": {"slope_system": self.system_r2[0],
                          "intercept_system": self.system_r2[1]},
            "clamped": list(self.clamped),
            "normality": self.normality,
        }

    def provenance(self) -> dict:
        d = self.to_dict()
        return {"gains_db": [gl.gain_db for gl in self.per_gain], "per_gain": d["per_gain"],
                "system_r2": d["system_r2"], "clamped": d["clamped"]}


def temporal_stats(burst: Burst) -> BurstStats:
    """Per-pixel temporal mean (black-subtracted) and unbiased variance."""
    if len(burst) < 2:
        raise CalibrationError("temporal statistics need at least 2 frames")
    ref = burst.template
    stack = burst.stack() - ref.black_level
    return BurstStats(mean=stack.mean(axis=0), variance=stack.var(axis=0, ddof=1),
                      n_frames=len(burst), gain_db=ref.gain_db,
                      saturation=(1.0 - SATURATION_MARGIN) * (ref.white_level - ref.black_level))


def collect_pairs(stats: BurstStats, regions: Sequence[PatchRegion]) -> np.ndarray:
    """(n, 2) array of (mean, variance), one row per unsaturated pixel in the regions."""
    if not regions:
        raise CalibrationError("region list is empty")
    chunks = []
    for reg in regions:
        reg.check(stats.mean.shape)
        rs, cs = reg.slices()
        mu, var = stats.mean[rs, cs].ravel(), stats.variance[rs, cs].ravel()
        keep = mu < stats.saturation
        chunks.append(np.column_stack([mu[keep], var[keep]]))
    return np.concatenate(chunks)


def fit_gain(pairs, gain_db: float, ransac_config: RansacConfig | None = None,
             seed: int = 0, n_frames: int = 100) -> GainLine:
    """RANSAC line through (mean, variance) pairs of one gain."""
    cfg = ransac_config or RansacConfig()
    pairs = np.asarray(pairs, dtype=float)
    if len(pairs) < 2:
        raise CalibrationError("need at least 2 pairs")
    fit = ransac_line(pairs, iterations=cfg.iterations,
                      inlier_threshold=cfg.band(pairs[:, 1], n_frames), seed=seed,
                      refine=cfg.refine, relative=cfg.residual == "relative")
    if fit.slope <= 0:
        raise CalibrationError(f"nonpositive slope {fit.slope:.4g} at {gain_db} dB")
    return GainLine(float(gain_db), fit, len(pairs))


def solve_noise_model(lines: Sequence[GainLine]) -> CalibrationReport:
    gains = sorted({gl.gain_db for gl in lines})
    if len(gains) < 2:
        raise CalibrationError("at least 2 distinct gains are needed to separate sigma_d2 and sigma_r2")
    if all(gl.fit.slope == 0 for gl in lines):
        raise CalibrationError("all slopes are zero")
    if any(gl.fit.slope <= 0 for gl in lines):
        raise CalibrationError("all per-gain slopes must be positive")
    g = np.array([gl.gain.linear for gl in lines])
    a = np.array([gl.fit.slope for gl in lines])
    b = np.array([gl.fit.intercept for gl in lines])

    (alpha,), r2_a = lstsq_through_constraints([([gi], ai) for gi, ai in zip(g, a)])
    (sd2, sr2), r2_b = lstsq_through_constraints([([gi * gi, 1.0], bi) for gi, bi in zip(g, b)])

    clamped = []
    if sd2 < 0 or sr2 < 0:
        if sd2 < 0 and sr2 < 0:
            sd2 = sr2 = 0.0
            clamped = ["sigma_d2", "sigma_r2"]
        elif sd2 < 0:
            sd2, sr2 = 0.0, max(float(np.mean(b)), 0.0)
            clamped = ["sigma_d2"]
        else:
            g2 = g * g
            sd2, sr2 = max(float(np.dot(g2, b) / np.dot(g2, g2)), 0.0), 0.0
            clamped = ["sigma_r2"]
        pred = g * g * sd2 + sr2
        r2_b = 1.0 - float(np.sum((b - pred) ** 2)) / max(float(np.sum((b - b.mean()) ** 2)), 1e-300)
        log.warning("clamped negative noise terms to zero: %s", ", ".join(clamped))

    report = CalibrationReport(model=NoiseModel(float(alpha), float(sd2), float(sr2)),
                               per_gain=sorted(lines, key=lambda gl: gl.gain_db),
                               system_r2=(float(r2_a), float(r2_b)), clamped=clamped)
    report.model = NoiseModel(report.model.alpha, report.model.sigma_d2, report.model.sigma_r2,
                              provenance=report.provenance())
    return report


def calibrate(bursts: Sequence[Burst], regions, ransac_config: RansacConfig | None = None,
              seed: int = 0, threads: int = 1, keep_pairs: bool = False):
    """Full calibration.  ``regions`` is one region list for all bursts or one per burst.

    Returns the report, plus ``{gain_db: pairs}`` when ``keep_pairs``.
    """
    if not bursts:
        raise CalibrationError("no bursts given")
    if regions and isinstance(regions[0], PatchRegion):
        per_burst = [list(regions)] * len(bursts)
    else:
        per_burst = [list(r) for r in regions]
        if len(per_burst) != len(bursts):
            raise CalibrationError(f"{len(per_burst)} region lists for {len(bursts)} bursts")

    def burst_pairs(i):
        st = temporal_stats(bursts[i])
        return st.gain_db, st.n_frames, collect_pairs(st, per_burst[i])

    by_gain: dict[float, list[np.ndarray]] = defaultdict(list)
    frames: dict[float, int] = {}
    for gain_db, n, pairs in parallel_map(burst_pairs, range(len(bursts)), threads):
        by_gain[gain_db].append(pairs)
        frames[gain_db] = min(n, frames.get(gain_db, n))
    gains = sorted(by_gain)
    pooled = {gd: np.concatenate(by_gain[gd]) for gd in gains}

    lines = parallel_map(
        lambda k: fit_gain(pooled[gains[k]], gains[k], ransac_config, seed + k, frames[gains[k]]),
        range(len(gains)), threads)
    for gl in lines:
        log.info("gain %.1f dB: slope %.4f intercept %.3f r2 %.4f (%d/%d inliers)",
                 gl.gain_db, gl.fit.slope, gl.fit.intercept, gl.fit.r2,
                 gl.fit.n_inliers, gl.n_pairs)
    report = solve_noise_model(lines)
    return (report, pooled) if keep_pairs else report


@dataclass(eq=False)
class NormalitySweep:
    mean: np.ndarray          # per tested pixel, black-subtracted temporal mean
    pvalue: np.ndarray        # NaN where the series is constant
    distinct: np.ndarray      # number of distinct code values in the series
    n_frames: int
    zero_variance: int
    buckets: list[dict]

    def pass_fraction(self, min_mean: float = -math.inf, max_mean: float = math.inf,
                      alpha: float = 0.05) -> float:
        sel = (self.mean > min_mean) & (self.mean <= max_mean) & ~np.isnan(self.pvalue)
        if not sel.any():
            return math.nan
        return float(np.mean(self.pvalue[sel] > alpha))


def normality_sweep(burst: Burst, regions: Sequence[PatchRegion] | None = None,
                    buckets: int = 10, alpha: float = 0.05,
                    sparse_levels: int | None = None) -> NormalitySweep:
    """Shapiro-Wilk per pixel location over time, summarized in equal-count mean buckets.

    A series is flagged sparse when it takes fewer than ``sparse_levels`` distinct
    code values (default: a quarter of the frame count); low-mean failures are
    expected to concentrate there.
    """
    n = len(burst)
    if n < MIN_NORMALITY_FRAMES:
        raise CalibrationError(f"normality sweep needs >= {MIN_NORMALITY_FRAMES} frames, got {n}")
    stack = burst.stack() - burst.template.black_level
    if regions:
        cols = []
        for reg in regions:
            reg.check(stack.shape[1:])
            rs, cs = reg.slices()
            cols.append(stack[:, rs, cs].reshape(n, -1))
        series = np.concatenate(cols, axis=1)
    else:
        series = stack.reshape(n, -1)
    mean = series.mean(axis=0)
    _, p = shapiro_wilk_columns(series, axis=0)
    srt = np.sort(series, axis=0)
    distinct = 1 + np.count_nonzero(np.diff(srt, axis=0), axis=0)
    zero_var = int(np.count_nonzero(np.isnan(p)))
    sparse_levels = max(n // 4, 2) if sparse_levels is None else sparse_levels

    rows = []
    order = np.argsort(mean, kind="stable")
    for chunk in np.array_split(order, buckets):
        if chunk.size == 0:
            continue
        pc = p[chunk]
        tested = ~np.isnan(pc)
        sparse = distinct[chunk] < sparse_levels
        fails = tested & (pc <= alpha)
        rows.append({
            "mean_lo": float(mean[chunk].min()),
            "mean_hi": float(mean[chunk].max()),
            "n_pixels": int(chunk.size),
            "n_tested": int(tested.sum()),
            "zero_variance": int((~tested).sum()),
            "pass_fraction": float(np.mean(pc[tested] > alpha)) if tested.any() else math.nan,
            "sparse_pixels": int(sparse.sum()),
            "sparse_failures": int((fails & sparse).sum()),
            "median_distinct_levels": float(np.median(distinct[chunk])),
        })
    return NormalitySweep(mean, p, distinct, n, zero_var, rows)

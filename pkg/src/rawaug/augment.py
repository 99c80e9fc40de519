"""Noise-accounted RAW augmentation and the baselines it is compared against.

The central operator scales a frame as if exposure/illumination changed by
``p_u`` and analog gain by ``p_g``, then adds just enough Gaussian noise for
the result to follow the noise model at the new condition.  Using the pixel
itself as the estimate of its expectation (``mu ~ x_pre``), the added
variance is::

    p_u (1 - p_u) p_g^2 g alpha x_pre
      + (1 - p_u^2) p_g^2 g^2 sigma_d2
      + (1 - p_u^2 p_g^2) sigma_r2

Negative values are clipped to zero and counted.  They arise from brightening
and, rarely, from dark pixels whose noise pushed ``x_pre`` far below zero;
``x_pre`` is used as-is because clipping it would bias the added variance.

All operators take raw-DN frames, work on black-subtracted values, and return
frames clamped to ``[0, white_level]`` raw DN.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .kernels import BlurKernel, KernelError, convolve_cfa, shifted_taps
from .noise_model import NoiseModel
from .raw_core import CHANNELS, RawFrame, channel_index_map, merge_planes, split_planes
from .rng import as_generator

MODES = ("ours", "naive", "wo_prior", "ksigma", "varmap")


class AugmentError(ValueError):
    pass


def _count(report, key, n):
    if report is not None:
        report[key] = report.get(key, 0) + int(n)


# --- configuration and per-frame parameters ---------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    contrast_range: tuple[float, float] = (0.01, 1.0)
    brightness_range: tuple[float, float] = (-0.1, 0.1)
    hue_probability: float = 0.5
    hue_spread: float = 0.2
    blur_probability: float = 0.5
    blur_distance_range: tuple[int, int] = (0, 13)
    geometric_probability: float = 0.8
    max_shift: float = 0.10
    max_scale: float = 0.03
    # calibrated gain span in dB; None disables gain re-attribution (p_g = 1)
    gain_range_db: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("contrast_range", "brightness_range", "blur_distance_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise AugmentError(f"{name}: min {lo} > max {hi}")
        if self.contrast_range[0] <= 0:
            raise AugmentError("contrast minimum must be positive")
        if self.blur_distance_range[0] < 0:
            raise AugmentError("blur distance must be nonnegative")
        for name in ("hue_probability", "blur_probability", "geometric_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise AugmentError(f"{name} must be a probability")
        if not 0.0 <= self.hue_spread < 1.0:
            raise AugmentError("hue_spread must be in [0, 1)")
        if self.max_shift < 0 or not 0 <= self.max_scale < 1:
            raise AugmentError("invalid geometric limits")
        if self.gain_range_db is not None and self.gain_range_db[0] > self.gain_range_db[1]:
            raise AugmentError("gain_range_db: min > max")

    @classmethod
    def from_dict(cls, d: dict | None) -> "AugmentConfig":
        d = dict(d or {})
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise AugmentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AugmentSpec:
    p_c_base: float = 1.0
    p_c_per_channel: tuple[float, float, float] = (1.0, 1.0, 1.0)
    p_b_hat: float = 0.0
    p_g: float = 1.0
    blur_kernel: BlurKernel | None = None
    shift: tuple[int, int] = (0, 0)
    scale: float = 1.0
    hue_applied: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.p_g <= 0:
            raise AugmentError("p_g must be positive")
        if self.scale <= 0:
            raise AugmentError("scale must be positive")
        if self.hue_applied:
            lo, hi = 0.8 * self.p_c_base, 1.2 * self.p_c_base
            if any(not lo - 1e-12 <= c <= hi + 1e-12 for c in self.p_c_per_channel):
                raise AugmentError("per-channel contrast outside [0.8, 1.2] x base")

    @property
    def contrast(self) -> tuple[float, float, float]:
        if self.hue_applied:
            return tuple(self.p_c_per_channel)
        return (self.p_c_base,) * 3

    def is_identity(self) -> bool:
        return (all(c == 1.0 for c in self.contrast) and self.p_b_hat == 0.0 and self.p_g == 1.0
                and self.shift == (0, 0) and self.scale == 1.0
                and (self.blur_kernel is None or self.blur_kernel == BlurKernel.identity()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blur_kernel"] = None if self.blur_kernel is None else self.blur_kernel.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        d = dict(d)
        if d.get("blur_kernel") is not None:
            d["blur_kernel"] = BlurKernel.from_dict(d["blur_kernel"])
        for k in ("p_c_per_channel", "shift"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def sample_spec(config: AugmentConfig, rng, gain_db: float | None = None,
                seed: int = 0, shape: tuple[int, int] | None = None) -> AugmentSpec:
    """Draw one frame's augmentation parameters.

    ``shape`` (height, width) converts the relative shift limit to pixels;
    without it no shift is sampled.
    """
    rng = as_generator(rng)
    lo, hi = config.contrast_range
    p_c = float(rng.uniform(lo, hi)) if lo < hi else float(lo)

    hue = bool(rng.random() < config.hue_probability)
    s = config.hue_spread
    per_ch = tuple(float(v) for v in rng.uniform(1 - s, 1 + s, size=3) * p_c) if hue else (p_c,) * 3

    blo, bhi = config.brightness_range
    p_b_hat = float(rng.uniform(blo, bhi)) if blo < bhi else float(blo)

    p_g = 1.0
    if config.gain_range_db is not None and gain_db is not None:
        glo, ghi = config.gain_range_db
        delta_db = float(rng.uniform(glo - gain_db, ghi - gain_db)) if glo < ghi else glo - gain_db
        p_g = 10.0 ** (delta_db / 20.0)

    kernel = None
    if rng.random() < config.blur_probability:
        dlo, dhi = config.blur_distance_range
        d = int(rng.integers(dlo, dhi + 1))
        direction = "horizontal" if rng.random() < 0.5 else "vertical"
        kernel = BlurKernel.linear(d, direction) if d > 0 else None

    shift, scale = (0, 0), 1.0
    if rng.random() < config.geometric_probability:
        if shape is not None and config.max_shift > 0:
            h, w = shape
            dy = rng.uniform(-config.max_shift, config.max_shift) * h
            dx = rng.uniform(-config.max_shift, config.max_shift) * w
            shift = (_even(dx), _even(dy))
        if config.max_scale > 0:
            scale = float(rng.uniform(1 - config.max_scale, 1 + config.max_scale))

    return AugmentSpec(p_c_base=p_c, p_c_per_channel=per_ch, p_b_hat=p_b_hat, p_g=p_g,
                       blur_kernel=kernel, shift=shift, scale=scale, hue_applied=hue, seed=seed)


def _even(v: float) -> int:
    """Nearest even integer (whole Bayer quads)."""
    return int(2 * round(v / 2.0))


# --- noise-accounted operators ----------------------------------------------

def _gain_terms(model: NoiseModel, frame: RawFrame):
    g = frame.gain.linear
    return g, g * model.alpha, g * g * model.sigma_d2, model.sigma_r2


def added_variance(model: NoiseModel, g: float, x_pre, p_u, p_g):
    """Correction variance for a (p_u, p_g) change, before clipping."""
    x_pre, p_u = np.asarray(x_pre, float), np.asarray(p_u, float)
    return (p_u * (1 - p_u) * p_g**2 * g * model.alpha * x_pre
            + (1 - p_u**2) * p_g**2 * g * g * model.sigma_d2
            + (1 - p_u**2 * p_g**2) * model.sigma_r2)


def target_variance(model: NoiseModel, g: float, mu, p_u, p_g):
    """Noise-model variance of a real capture at exposure x p_u and gain x p_g."""
    gn = g * p_g
    return gn * model.alpha * p_u * np.asarray(mu, float) * p_g + gn * gn * model.sigma_d2 + model.sigma_r2


def _gain_db_after(frame: RawFrame, p_g: float) -> float:
    return frame.gain_db + 20.0 * math.log10(p_g) if p_g != 1.0 else frame.gain_db


def exposure_gain_shift(frame: RawFrame, model: NoiseModel, p_u: float, p_g: float, rng=None,
                        report: dict | None = None) -> RawFrame:
    """Simulate exposure x ``p_u`` and analog gain x ``p_g`` with matching noise."""
    if p_u <= 0 or p_g <= 0:
        raise AugmentError("p_u and p_g must be positive")
    if p_u == 1.0 and p_g == 1.0:
        return frame
    rng = as_generator(rng)
    x = frame.signal()
    var = added_variance(model, frame.gain.linear, x, p_u, p_g)
    neg = var < 0
    _count(report, "clipped_variance", neg.sum())
    var[neg] = 0.0
    out = p_u * p_g * x + np.sqrt(var) * rng.standard_normal(x.shape)
    return _finish(frame, out, report, gain_db=_gain_db_after(frame, p_g))


def _finish(frame: RawFrame, signal: np.ndarray, report, **changes) -> RawFrame:
    raw = signal + frame.black_level
    _count(report, "saturated", np.count_nonzero(raw > frame.white_level))
    _count(report, "floored", np.count_nonzero(raw < 0))
    return frame.with_signal(signal, **changes)


def _per_site(frame: RawFrame, values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float)[channel_index_map(frame.pixels.shape, frame.cfa)]


def jitter_target(frame: RawFrame, spec: AugmentSpec) -> tuple[np.ndarray, np.ndarray, float]:
    """(x_pre, x_new target, p_b) with ``p_b = p_b_hat * min(x_pre)``."""
    x = frame.signal()
    p_b = spec.p_b_hat * float(x.min())
    return x, _per_site(frame, spec.contrast) * x + p_b, p_b


def color_jitter(frame: RawFrame, model: NoiseModel, spec: AugmentSpec, rng=None,
                 report: dict | None = None) -> RawFrame:
    """Contrast/brightness/hue change with prior-noise-aware correction noise.

    Per pixel the factor ``f = x_new / x_pre`` is split as ``p_g`` (one value
    per frame, from ``spec``) times ``p_u = f / p_g``.  Pixels with
    ``x_pre == 0`` or ``f <= 0`` get ``max(x_new, 0)`` without noise.
    """
    if all(c == 1.0 for c in spec.contrast) and spec.p_b_hat == 0.0 and spec.p_g == 1.0:
        return frame
    rng = as_generator(rng)
    x, target, _ = jitter_target(frame, spec)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(x != 0, target / np.where(x != 0, x, 1.0), 0.0)
    valid = (x != 0) & (f > 0)
    p_u = f / spec.p_g
    var = np.where(valid, added_variance(model, frame.gain.linear, x, p_u, spec.p_g), 0.0)
    neg = var < 0
    _count(report, "clipped_variance", neg.sum())
    _count(report, "noise_free", np.count_nonzero(~valid))
    var[neg] = 0.0
    z = rng.standard_normal(x.shape)
    out = np.where(valid, target + np.sqrt(var) * z, np.maximum(target, 0.0))
    return _finish(frame, out, report, gain_db=_gain_db_after(frame, spec.p_g))


def naive_color_jitter(frame: RawFrame, spec: AugmentSpec, report: dict | None = None) -> RawFrame:
    """Intensity map only; the noise is scaled along with the signal."""
    if all(c == 1.0 for c in spec.contrast) and spec.p_b_hat == 0.0:
        return frame
    _, target, _ = jitter_target(frame, spec)
    return _finish(frame, target, report)


def wo_prior_color_jitter(frame: RawFrame, model: NoiseModel, spec: AugmentSpec, rng=None,
                          report: dict | None = None) -> RawFrame:
    """Baseline that treats the input as noise-free and adds the full target-condition noise."""
    rng = as_generator(rng)
    _, target, _ = jitter_target(frame, spec)
    g_new = frame.gain.linear * spec.p_g
    var = model.variance(g_new, np.maximum(target, 0.0))
    out = target + np.sqrt(var) * rng.standard_normal(target.shape)
    return _finish(frame, out, report, gain_db=_gain_db_after(frame, spec.p_g))


def blur_added_variance(model: NoiseModel, g: float, taps: Sequence[np.ndarray],
                        kernel: BlurKernel) -> np.ndarray:
    shot = sum((1 - w) * w * t for w, t in zip(kernel.weights, taps))
    return g * model.alpha * shot + (1 - kernel.sum_sq) * (g * g * model.sigma_d2 + model.sigma_r2)


def noise_accounted_blur(frame: RawFrame, model: NoiseModel, kernel: BlurKernel, rng=None,
                         report: dict | None = None) -> RawFrame:
    """Same-color convolution plus the read/dark noise a real motion blur keeps."""
    if kernel == BlurKernel.identity():
        return frame
    rng = as_generator(rng)
    taps = shifted_taps(frame.signal(), kernel)
    mean = sum(w * t for w, t in zip(kernel.weights, taps))
    var = blur_added_variance(model, frame.gain.linear, taps, kernel)
    neg = var < 0
    _count(report, "clipped_variance", neg.sum())
    var[neg] = 0.0
    out = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
    return _finish(frame, out, report)


def naive_blur(frame: RawFrame, kernel: BlurKernel) -> RawFrame:
    if kernel == BlurKernel.identity():
        return frame
    return frame.with_signal(convolve_cfa(frame.signal(), kernel))


# --- geometry ---------------------------------------------------------------

def geometric(frame: RawFrame, spec: AugmentSpec) -> RawFrame:
    """Shift by whole Bayer quads and nearest-quad rescale about the center.

    Odd pixel shifts are rounded to the nearest even count so the CFA phase
    is preserved.  Out-of-frame samples replicate the edge quad.
    """
    dx, dy = (_even(v) for v in spec.shift)
    if (dx, dy) == (0, 0) and spec.scale == 1.0:
        return frame
    planes = split_planes(frame.pixels)
    h, w = planes[0].shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows = np.clip(np.rint((np.arange(h) - cy) / spec.scale + cy - dy // 2), 0, h - 1).astype(int)
    cols = np.clip(np.rint((np.arange(w) - cx) / spec.scale + cx - dx // 2), 0, w - 1).astype(int)
    out = merge_planes([p[np.ix_(rows, cols)] for p in planes])
    return frame.with_pixels(out)


# --- K-Sigma and variance-map baselines -------------------------------------

@dataclass(frozen=True, eq=False)
class KSigmaFrame:
    """Variance-stabilized values plus the frame they came from (for the inverse)."""

    values: np.ndarray
    source: RawFrame = field(repr=False)
    k: float = 1.0
    b: float = 0.0


def ksigma_params(model: NoiseModel, frame: RawFrame) -> tuple[float, float]:
    k, b = model.gain_line(frame.gain.linear)
    if k == 0:
        raise AugmentError("K-Sigma needs a nonzero slope")
    return k, b


def ksigma_transform(x, k: float, b: float):
    return np.asarray(x, float) / k + b / (k * k)


def ksigma_untransform(y, k: float, b: float):
    return (np.asarray(y, float) - b / (k * k)) * k


def ksigma_forward(frame: RawFrame, model: NoiseModel) -> KSigmaFrame:
    """``y = x/k + b/k^2`` on black-subtracted values, so that Var(y) ~ E[y]."""
    k, b = ksigma_params(model, frame)
    return KSigmaFrame(ksigma_transform(frame.signal(), k, b), frame, k, b)


def ksigma_inverse(kframe: KSigmaFrame, model: NoiseModel | None = None) -> RawFrame:
    k, b = (kframe.k, kframe.b) if model is None else ksigma_params(model, kframe.source)
    signal = ksigma_untransform(kframe.values, k, b)
    return kframe.source.with_pixels(signal + kframe.source.black_level)


def variance_map(frame: RawFrame, model: NoiseModel) -> np.ndarray:
    """Per-pixel predicted variance, using the (non-negative) pixel as its own mean."""
    return model.variance(frame.gain.linear, np.maximum(frame.signal(), 0.0))


# --- pipeline ---------------------------------------------------------------

def augment_frame(frame: RawFrame, model: NoiseModel, spec: AugmentSpec, rng=None,
                  mode: str = "ours", report: dict | None = None):
    """Geometry, then color jitter, then blur, with the chosen noise handling.

    Returns the augmented frame; ``ksigma`` returns a :class:`KSigmaFrame` and
    ``varmap`` a ``(frame, variance map)`` tuple.
    """
    if mode not in MODES:
        raise AugmentError(f"unknown mode {mode!r}; expected one of {MODES}")
    rng = as_generator(rng)
    out = geometric(frame, spec)
    kernel = spec.blur_kernel or BlurKernel.identity()
    if mode == "naive":
        out = naive_blur(naive_color_jitter(out, spec, report), kernel)
    elif mode == "wo_prior":
        out = wo_prior_color_jitter(naive_blur(out, kernel), model, spec, rng, report)
    else:
        out = color_jitter(out, model, spec, rng, report)
        out = noise_accounted_blur(out, model, kernel, rng, report)
    if mode == "ksigma":
        return ksigma_forward(out, model)
    if mode == "varmap":
        return out, variance_map(out, model)
    return out

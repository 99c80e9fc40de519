"""Synthetic Bayer sensor used as ground truth.

Photon counts are drawn from an exact Poisson distribution, then pre-gain and
post-gain Gaussian noise are added::

    x = g * (alpha * Poisson(u_bar) + N(0, sigma_d2)) + N(0, sigma_r2) + black

The Gaussian noise model in :mod:`rawaug.noise_model` is only an approximation
of this chain, which is what makes the simulator useful as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import BlurKernel, convolve_cfa
from .noise_model import NoiseModel
from .raw_core import Burst, GainValue, RawFrame, channel_index_map
from .rng import CAPTURE, as_generator, parallel_map, stream

# spans ~5 to ~2000 expected photons, log-spaced
DEFAULT_PATCH_PHOTONS = tuple(float(v) for v in np.geomspace(5.0, 2000.0, 24))


def _default_attenuation() -> np.ndarray:
    # fixed pseudo-colors: each patch gets its own R/G/B filter response
    k = np.arange(24)
    r = 0.65 + 0.35 * np.sin(0.9 * k + 0.3)
    g = 0.80 + 0.20 * np.sin(1.3 * k + 1.9)
    b = 0.60 + 0.40 * np.sin(0.7 * k + 4.1)
    return np.clip(np.stack([r, g, b], axis=1), 0.25, 1.0)


DEFAULT_ATTENUATION = _default_attenuation()


@dataclass(frozen=True)
class SensorSpec:
    model: NoiseModel
    bit_depth: int = 12
    black_level: float = 256.0
    white_level: float = 4095.0
    quantize: bool = True
    cfa: str = "RGGB"

    @property
    def max_code(self) -> int:
        return 2**self.bit_depth - 1

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "bit_depth": self.bit_depth,
                "black_level": self.black_level, "white_level": self.white_level,
                "quantize": self.quantize, "cfa": self.cfa}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorSpec":
        model = d.get("model", d)
        return cls(model=NoiseModel.from_dict(model),
                   bit_depth=int(d.get("bit_depth", 12)),
                   black_level=float(d.get("black_level", 256.0)),
                   white_level=float(d.get("white_level", 4095.0)),
                   quantize=bool(d.get("quantize", True)),
                   cfa=d.get("cfa", "RGGB"))


@dataclass(frozen=True, eq=False)
class SceneMap:
    """Expected photon count per CFA site (filter response already applied)."""

    u_bar: np.ndarray
    cfa: str = "RGGB"
    patch_size: int | None = None
    layout: tuple[int, int] | None = None
    patch_index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        u = np.array(self.u_bar, dtype=np.float64, copy=True)
        if u.ndim != 2 or u.shape[0] % 2 or u.shape[1] % 2:
            raise ValueError(f"scene must be 2-D with even sides, got {u.shape}")
        if not np.all(np.isfinite(u)) or np.any(u < 0):
            raise ValueError("scene values must be finite and nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "u_bar", u)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u_bar.shape

    def scaled(self, factor: float) -> "SceneMap":
        return SceneMap(self.u_bar * factor, self.cfa, self.patch_size, self.layout,
                        self.patch_index)

    def patch_regions(self, size: int = 24):
        """Centered ``size x size`` region in every chart patch."""
        from .calibration import PatchRegion

        if self.patch_size is None or self.layout is None:
            raise ValueError("scene has no patch layout")
        if size > self.patch_size:
            raise ValueError("region larger than patch")
        off = (self.patch_size - size) // 2
        off -= off % 2
        rows, cols = self.layout
        return [PatchRegion((r * self.patch_size + off, c * self.patch_size + off), (size, size))
                for r in range(rows) for c in range(cols)]


def color_checker_scene(patch_means=DEFAULT_PATCH_PHOTONS, layout=(4, 6), patch_size: int = 32,
                        illumination: float = 1.0, cfa: str = "RGGB",
                        attenuation=None) -> SceneMap:
    means = np.asarray(patch_means, dtype=float)
    rows, cols = layout
    if means.shape != (rows * cols,):
        raise ValueError(f"need {rows * cols} patch values, got {means.shape}")
    if np.any(means < 0):
        raise ValueError("patch values must be nonnegative")
    if illumination < 0:
        raise ValueError("illumination must be nonnegative")
    if patch_size % 2:
        raise ValueError("patch_size must be even")
    att = DEFAULT_ATTENUATION if attenuation is None else np.asarray(attenuation, dtype=float)
    if att.shape != (rows * cols, 3):
        raise ValueError("attenuation must be (patches, 3)")
    h, w = rows * patch_size, cols * patch_size
    idx = (np.arange(h)[:, None] // patch_size) * cols + np.arange(w)[None, :] // patch_size
    ch = channel_index_map((h, w), cfa)
    u = means[idx] * att[idx, ch] * illumination
    return SceneMap(u, cfa, patch_size, (rows, cols), idx)


def ramp_scene(shape=(64, 64), low: float = 5.0, high: float = 2000.0,
               cfa: str = "RGGB") -> SceneMap:
    h, w = shape
    row = np.linspace(low, high, w)
    return SceneMap(np.broadcast_to(row, (h, w)).copy(), cfa)


def uniform_scene(shape, u_bar: float, cfa: str = "RGGB") -> SceneMap:
    return SceneMap(np.full(shape, float(u_bar)), cfa)


def _signal(u_bar: np.ndarray, g: float, spec: SensorSpec, rng: np.random.Generator):
    m = spec.model
    u = rng.poisson(u_bar).astype(np.float64)
    nd = rng.standard_normal(u_bar.shape) * np.sqrt(m.sigma_d2)
    nr = rng.standard_normal(u_bar.shape) * np.sqrt(m.sigma_r2)
    return g * (m.alpha * u + nd) + nr


def _finish(x: np.ndarray, spec: SensorSpec) -> np.ndarray:
    x = x + spec.black_level
    if spec.quantize:
        x = np.rint(x)
    return np.clip(x, 0.0, spec.max_code)


def _frame(pixels, gain: GainValue, spec: SensorSpec, cfa: str) -> RawFrame:
    return RawFrame(pixels, cfa=cfa, bit_depth=spec.bit_depth, black_level=spec.black_level,
                    white_level=spec.white_level, gain_db=gain.db)


def _gain(gain) -> GainValue:
    return gain if isinstance(gain, GainValue) else GainValue(float(gain))


def capture(scene: SceneMap, gain, spec: SensorSpec, rng=None) -> RawFrame:
    """One exposure of ``scene``; ``gain`` is a GainValue or dB."""
    gain = _gain(gain)
    x = _signal(scene.u_bar, gain.linear, spec, as_generator(rng))
    return _frame(_finish(x, spec), gain, spec, scene.cfa)


def capture_burst(scene: SceneMap, gain, spec: SensorSpec, n: int, seed: int = 0,
                  key: tuple[int, ...] = (), threads: int = 1) -> Burst:
    """``n`` independent captures; frame ``i`` draws from stream ``(seed, CAPTURE, *key, i)``."""
    if n < 2:
        raise ValueError(f"a burst needs n >= 2, got {n}")
    frames = parallel_map(
        lambda i: capture(scene, gain, spec, stream(seed, CAPTURE, *key, i)), range(n), threads)
    return Burst(tuple(frames))


def blurred_scene(scene: SceneMap, kernel: BlurKernel) -> SceneMap:
    """Photon-domain motion blur: the sensor integrates a weighted mix of positions."""
    return SceneMap(convolve_cfa(scene.u_bar, kernel), scene.cfa, scene.patch_size,
                    scene.layout, scene.patch_index)


def capture_motion_blur(scene: SceneMap, gain, spec: SensorSpec, kernel: BlurKernel,
                        rng=None) -> RawFrame:
    return capture(blurred_scene(scene, kernel), gain, spec, rng)


def capture_stack(scene: SceneMap, gain, spec: SensorSpec, n: int, seed: int = 0,
                  key: tuple[int, ...] = ()) -> np.ndarray:
    """(n, h, w) raw DN without building frames; for large Monte-Carlo runs."""
    gain = _gain(gain)
    return np.stack([_finish(_signal(scene.u_bar, gain.linear, spec,
                                     stream(seed, CAPTURE, *key, i)), spec)
                     for i in range(n)])


def surrogate_stack(scene: SceneMap, gain, spec: SensorSpec, n: int, seed: int = 0) -> np.ndarray:
    """Gaussian-surrogate captures, quantized and clipped like the real chain."""
    gain = _gain(gain)
    g, m = gain.linear, spec.model
    mu = g * m.alpha * scene.u_bar
    sd = np.sqrt(g * g * m.alpha**2 * scene.u_bar + g * g * m.sigma_d2 + m.sigma_r2)
    rng = stream(seed, CAPTURE, 99)
    return np.stack([_finish(mu + sd * rng.standard_normal(mu.shape), spec) for _ in range(n)])


def exposure_for(spec: SensorSpec, gain, base: SceneMap, fill: float) -> float:
    """Illumination factor putting the brightest site at ``fill`` of the usable range."""
    g = _gain(gain).linear
    peak = float(base.u_bar.max())
    if peak == 0:
        return 0.0
    return fill * (spec.white_level - spec.black_level) / (g * spec.model.alpha * peak)


def calibration_bursts(spec: SensorSpec, gains_db=(6.0, 12.0, 24.0), fills=(0.3, 0.03),
                       n_frames: int = 100, seed: int = 0, patch_size: int = 32,
                       threads: int = 1):
    """Chart bursts for every (gain, fill) pair, plus the patch regions.

    Returns ``(bursts, regions)``; burst order is gain-major.
    """
    base = color_checker_scene(patch_size=patch_size, cfa=spec.cfa)
    bursts = []
    for gi, gdb in enumerate(gains_db):
        for li, fill in enumerate(fills):
            scene = base.scaled(exposure_for(spec, gdb, base, fill))
            bursts.append(capture_burst(scene, gdb, spec, n_frames, seed=seed, key=(gi, li),
                                        threads=threads))
    return bursts, base.patch_regions()

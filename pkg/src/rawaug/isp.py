"""A deliberately small ISP: bilinear demosaic plus a gamma tone curve.

The three-parameter curve is a reconstruction chosen so that ``knee = 0`` and
``scale = 1`` collapse it exactly onto the plain gamma curve::

    p = x ** (1 / gamma)
    y = clamp(scale * (1 + knee) * p / (1 + knee * p), 0, 1)
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve

from .raw_core import RawFrame, channel_mask, normalize

VARIANTS = ("simplest", "parameterized")
DEFAULT_GAMMA = 5.0

_K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=float) / 4.0
_K_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=float) / 4.0


class ISPError(ValueError):
    pass


@dataclass(frozen=True)
class ToneCurve:
    variant: str = "simplest"
    gamma: float = DEFAULT_GAMMA
    knee: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ISPError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.gamma > 0:
            raise ISPError("gamma must be positive")
        if self.knee < 0:
            raise ISPError("knee must be >= 0")
        if not self.scale > 0:
            raise ISPError("scale must be positive")

    @classmethod
    def simplest(cls, gamma: float = DEFAULT_GAMMA) -> "ToneCurve":
        return cls("simplest", gamma)

    @classmethod
    def parameterized(cls, gamma: float = DEFAULT_GAMMA, knee: float = 0.0,
                      scale: float = 1.0) -> "ToneCurve":
        return cls("parameterized", gamma, knee, scale)

    @classmethod
    def from_dict(cls, d: dict) -> "ToneCurve":
        unknown = set(d) - {"variant", "gamma", "knee", "scale"}
        if unknown:
            raise ISPError(f"unknown curve keys {sorted(unknown)}")
        variant = d.get("variant", "simplest")
        if variant == "simplest" and ({"knee", "scale"} & set(d)):
            raise ISPError("the simplest curve takes only gamma")
        return cls(variant, float(d.get("gamma", DEFAULT_GAMMA)), float(d.get("knee", 0.0)),
                   float(d.get("scale", 1.0)))

    @classmethod
    def from_json(cls, text: str) -> "ToneCurve":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.variant == "simplest":
            del d["knee"], d["scale"]
        return d


def tone_map(values, curve: ToneCurve) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise ISPError("tone_map input must lie in [0, 1]")
    p = x ** (1.0 / curve.gamma)
    if curve.variant == "simplest":
        return p
    y = curve.scale * (1.0 + curve.knee) * p / (1.0 + curve.knee * p)
    return np.clip(y, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class RgbImage:
    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3 or self.data.dtype != np.uint8:
            raise ISPError("RgbImage needs a (h, w, 3) uint8 array")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_ppm_bytes(self) -> bytes:
        header = f"P6\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + np.ascontiguousarray(self.data).tobytes()

    def save(self, path: str | os.PathLike) -> Path:
        """PPM always works; ``.png`` needs Pillow."""
        path = Path(path)
        if path.suffix.lower() == ".png":
            try:
                from PIL import Image
            except ImportError as exc:  # pragma: no cover - depends on environment
                raise ISPError("PNG output needs Pillow; write .ppm instead") from exc
            Image.fromarray(self.data, "RGB").save(path)
        else:
            path.write_bytes(self.to_ppm_bytes())
        return path


def read_ppm(path: str | os.PathLike) -> RgbImage:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P6" or parts[3] != b"255":
        raise ISPError("not an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    data = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8)
    if data.size != w * h * 3:
        raise ISPError("truncated PPM payload")
    return RgbImage(data.reshape(h, w, 3).copy())


def demosaic_bilinear(frame: RawFrame) -> np.ndarray:
    """Full-resolution (h, w, 3) float image from a normalized mosaic."""
    if not frame.normalized:
        raise ISPError("demosaic expects a normalized frame")
    px = frame.pixels
    out = np.empty(px.shape + (3,))
    for i, ch in enumerate("RGB"):
        mask = channel_mask(px.shape, ch, frame.cfa)
        k = _K_G if ch == "G" else _K_RB
        out[..., i] = convolve(np.where(mask, px, 0.0), k, mode="mirror")
        out[..., i][mask] = px[mask]
    return out


def develop(frame: RawFrame, curve: ToneCurve | None = None) -> RgbImage:
    """normalize, demosaic, tone map, then round half-to-even to 8 bits."""
    curve = curve or ToneCurve()
    rgb = np.clip(demosaic_bilinear(normalize(frame)), 0.0, 1.0)
    y = tone_map(rgb, curve)
    return RgbImage(np.rint(y * 255.0).astype(np.uint8))

"""CFA-aligned blur kernels.

Offsets are in Bayer-quad units: an offset of ``(0, 1)`` means two pixels to
the right, so every tap reads a site of the same color.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raw_core import merge_planes, split_planes


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class BlurKernel:
    offsets: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        offs = tuple((int(r), int(c)) for r, c in self.offsets)
        for (r, c), (r0, c0) in zip(offs, self.offsets):
            if r != r0 or c != c0:
                raise KernelError(f"offset {(r0, c0)} is not a whole number of Bayer quads")
        w = tuple(float(x) for x in self.weights)
        if len(w) != len(offs) or not w:
            raise KernelError("offsets and weights must be nonempty and equal length")
        if any(x < 0 for x in w):
            raise KernelError("kernel weights must be nonnegative")
        if abs(sum(w) - 1.0) > 1e-12:
            raise KernelError(f"kernel weights sum to {sum(w)!r}, not 1")
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "weights", w)

    @classmethod
    def identity(cls) -> "BlurKernel":
        return cls(((0, 0),), (1.0,))

    @classmethod
    def linear(cls, distance: int, direction: str = "horizontal") -> "BlurKernel":
        """Uniform segment of ``2*distance + 1`` taps along one axis."""
        d = int(distance)
        if d < 0:
            raise KernelError("blur distance must be >= 0")
        steps = range(-d, d + 1)
        if direction == "horizontal":
            offs = tuple((0, k) for k in steps)
        elif direction == "vertical":
            offs = tuple((k, 0) for k in steps)
        else:
            raise KernelError(f"unknown direction {direction!r}")
        n = len(offs)
        return cls(offs, (1.0 / n,) * n)

    @classmethod
    def from_pixel_offsets(cls, offsets, weights) -> "BlurKernel":
        quads = []
        for r, c in offsets:
            if r % 2 or c % 2:
                raise KernelError(f"pixel offset {(r, c)} would mix CFA colors")
            quads.append((r // 2, c // 2))
        return cls(tuple(quads), tuple(weights))

    @property
    def sum_sq(self) -> float:
        return float(sum(w * w for w in self.weights))

    @property
    def reach(self) -> int:
        return max(max(abs(r), abs(c)) for r, c in self.offsets)

    def to_dict(self) -> dict:
        return {"offsets": [list(o) for o in self.offsets], "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "BlurKernel":
        return cls(tuple(tuple(o) for o in d["offsets"]), tuple(d["weights"]))


def shifted_taps(mosaic: np.ndarray, kernel: BlurKernel) -> list[np.ndarray]:
    """For each tap, the mosaic sampled at ``(row + 2*dr, col + 2*dc)``.

    Borders reflect within each CFA plane, so colors never mix.
    """
    pad = kernel.reach
    planes = split_planes(np.asarray(mosaic, dtype=np.float64))
    if pad and min(planes[0].shape) <= pad:
        raise KernelError(f"kernel reach {pad} quads exceeds frame size")
    padded = [np.pad(p, pad, mode="reflect") if pad else p for p in planes]
    h, w = planes[0].shape
    taps = []
    for dr, dc in kernel.offsets:
        sub = [p[pad + dr: pad + dr + h, pad + dc: pad + dc + w] for p in padded]
        taps.append(merge_planes(sub))
    return taps


def convolve_cfa(mosaic: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    out = np.zeros(np.shape(mosaic))
    for w, tap in zip(kernel.weights, shifted_taps(mosaic, kernel)):
        out += w * tap
    return out

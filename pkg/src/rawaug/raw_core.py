"""Bayer RAW frame model and the ``.raw16`` + ``.json`` sidecar file format.

Frames keep raw DN (black level included) in float64.  Quantization happens
only in :func:`save_frame`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CFA_PATTERNS = ("RGGB", "BGGR", "GRBG", "GBRG")
CHANNELS = ("R", "G", "B")


class RawFormatError(ValueError):
    """Invalid frame data or sidecar metadata."""


@dataclass(frozen=True)
class GainValue:
    """Analog gain; ``linear = 10 ** (db / 20)`` (amplitude convention)."""

    db: float

    @property
    def linear(self) -> float:
        return float(10.0 ** (self.db / 20.0))

    @classmethod
    def from_linear(cls, linear: float) -> "GainValue":
        if linear <= 0:
            raise ValueError(f"linear gain must be positive, got {linear}")
        return cls(20.0 * float(np.log10(linear)))


@dataclass(frozen=True, eq=False)
class RawFrame:
    pixels: np.ndarray
    cfa: str = "RGGB"
    bit_depth: int = 10
    black_level: float = 64.0
    white_level: float = 1023.0
    gain_db: float = 0.0
    normalized: bool = False

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim != 2:
            raise RawFormatError(f"pixels must be 2-D, got shape {px.shape}")
        h, w = px.shape
        if h % 2 or w % 2:
            raise RawFormatError(f"dimensions must be even, got {w}x{h}")
        if self.cfa not in CFA_PATTERNS:
            raise RawFormatError(f"unknown CFA pattern {self.cfa!r}")
        if not self.normalized:
            if not 8 <= self.bit_depth <= 16:
                raise RawFormatError(f"bit_depth must be in [8, 16], got {self.bit_depth}")
            if not self.black_level < self.white_level <= 2**self.bit_depth - 1:
                raise RawFormatError(
                    f"need black_level < white_level <= {2**self.bit_depth - 1}, "
                    f"got {self.black_level}, {self.white_level}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def gain(self) -> GainValue:
        return GainValue(self.gain_db)

    @property
    def max_code(self) -> int:
        return 2**self.bit_depth - 1

    def signal(self) -> np.ndarray:
        """Black-subtracted pixel values (writable copy)."""
        return self.pixels - self.black_level

    def with_pixels(self, pixels: np.ndarray, **changes) -> "RawFrame":
        return replace(self, pixels=pixels, **changes)

    def with_signal(self, signal: np.ndarray, **changes) -> "RawFrame":
        """New frame from black-subtracted values, clamped to [0, white_level] raw DN."""
        raw = np.clip(signal + self.black_level, 0.0, self.white_level)
        return replace(self, pixels=raw, **changes)

    def metadata(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "cfa": self.cfa,
            "bit_depth": self.bit_depth,
            "black_level": self.black_level,
            "white_level": self.white_level,
            "gain_db": self.gain_db,
            "normalized": self.normalized,
        }


@dataclass(frozen=True)
class Burst:
    frames: tuple[RawFrame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise RawFormatError(f"a burst needs at least 2 frames, got {len(frames)}")
        ref = frames[0]
        for f in frames[1:]:
            if (f.pixels.shape, f.cfa, f.gain_db) != (ref.pixels.shape, ref.cfa, ref.gain_db):
                raise RawFormatError("burst frames must share size, CFA and gain")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i) -> RawFrame:
        return self.frames[i]

    def stack(self) -> np.ndarray:
        """(n, h, w) array of raw DN."""
        return np.stack([f.pixels for f in self.frames])

    @property
    def template(self) -> RawFrame:
        return self.frames[0]


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _payload(path: Path) -> Path:
    return path.with_suffix(".raw16")


def save_frame(frame: RawFrame, path: str | os.PathLike) -> None:
    """Write ``<name>.raw16`` (uint16 LE, row-major) and ``<name>.json``.

    Values are rounded half-to-even; anything outside ``[0, 2**bit_depth - 1]``
    after rounding is rejected.
    """
    path = Path(path)
    if frame.normalized:
        raise RawFormatError("normalized frames cannot be stored as raw16")
    q = np.rint(frame.pixels)
    bad = (q < 0) | (q > frame.max_code) | ~np.isfinite(q)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise RawFormatError(
            f"pixel ({r}, {c}) = {frame.pixels[r, c]} outside [0, {frame.max_code}]")
    meta = frame.metadata()
    _payload(path).write_bytes(q.astype("<u2").tobytes(order="C"))
    _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n")


def load_frame(path: str | os.PathLike) -> RawFrame:
    path = Path(path)
    side = _sidecar(path)
    if not side.exists():
        raise RawFormatError(f"missing sidecar {side}")
    meta = json.loads(side.read_text())
    try:
        w, h = int(meta["width"]), int(meta["height"])
        bit_depth = int(meta["bit_depth"])
    except KeyError as exc:
        raise RawFormatError(f"sidecar {side} lacks field {exc}") from None
    if w % 2 or h % 2:
        raise RawFormatError(f"dimensions must be even, got {w}x{h}")
    data = np.frombuffer(_payload(path).read_bytes(), dtype="<u2")
    if data.size != w * h:
        raise RawFormatError(f"payload has {data.size} pixels, sidecar declares {w}x{h}")
    if data.size and int(data.max()) > 2**bit_depth - 1:
        raise RawFormatError(f"payload value {int(data.max())} exceeds {bit_depth}-bit range")
    return RawFrame(
        pixels=data.reshape(h, w).astype(np.float64),
        cfa=meta.get("cfa", "RGGB"),
        bit_depth=bit_depth,
        black_level=float(meta["black_level"]),
        white_level=float(meta["white_level"]),
        gain_db=float(meta.get("gain_db", 0.0)),
        normalized=bool(meta.get("normalized", False)),
    )


def burst_paths(directory: str | os.PathLike) -> list[Path]:
    return sorted(Path(directory).glob("frame_*.raw16"))


def save_burst(frames: Iterable[RawFrame], directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for i, frame in enumerate(frames):
        p = directory / f"frame_{i:04d}.raw16"
        save_frame(frame, p)
        out.append(p)
    return out


def load_burst(directory: str | os.PathLike) -> Burst:
    paths = burst_paths(directory)
    if not paths:
        raise RawFormatError(f"no frame_*.raw16 files in {directory}")
    return Burst(tuple(load_frame(p) for p in paths))


def normalize(frame: RawFrame) -> RawFrame:
    """Map black level to 0 and white level to 1, clamping outside."""
    if frame.normalized:
        return frame
    scale = frame.white_level - frame.black_level
    out = np.clip((frame.pixels - frame.black_level) / scale, 0.0, 1.0)
    return replace(frame, pixels=out, black_level=0.0, white_level=1.0, normalized=True)


def _color_at(cfa: str, row_parity: int, col_parity: int) -> str:
    return cfa[2 * row_parity + col_parity]


def channel_mask(frame_or_shape, channel: str, cfa: str | None = None) -> np.ndarray:
    """Boolean mask of CFA sites for ``channel`` (``G`` covers both greens)."""
    if isinstance(frame_or_shape, RawFrame):
        shape, cfa = frame_or_shape.pixels.shape, frame_or_shape.cfa
    else:
        shape = tuple(frame_or_shape)
    if cfa is None:
        raise ValueError("cfa is required when passing a shape")
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}, got {channel!r}")
    mask = np.zeros(shape, dtype=bool)
    for rp in (0, 1):
        for cp in (0, 1):
            if _color_at(cfa, rp, cp) == channel:
                mask[rp::2, cp::2] = True
    return mask


def channel_index_map(shape: Sequence[int], cfa: str) -> np.ndarray:
    """Integer map 0/1/2 for R/G/B at each site."""
    out = np.empty(shape, dtype=np.int8)
    for rp in (0, 1):
        for cp in (0, 1):
            out[rp::2, cp::2] = CHANNELS.index(_color_at(cfa, rp, cp))
    return out


def split_planes(a: np.ndarray) -> list[np.ndarray]:
    """The four CFA-phase sub-images, in (0,0), (0,1), (1,0), (1,1) order."""
    return [a[0::2, 0::2], a[0::2, 1::2], a[1::2, 0::2], a[1::2, 1::2]]


def merge_planes(planes: Sequence[np.ndarray]) -> np.ndarray:
    h, w = planes[0].shape
    out = np.empty((2 * h, 2 * w), dtype=np.result_type(*planes))
    out[0::2, 0::2], out[0::2, 1::2], out[1::2, 0::2], out[1::2, 1::2] = planes
    return out

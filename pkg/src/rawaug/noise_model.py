"""Heteroscedastic Gaussian sensor noise model.

Black-subtracted pixel value ``x`` with expectation ``mu`` at analog gain ``g``::

    x ~ N(mu, g*alpha*mu + g**2*sigma_d2 + sigma_r2)

``alpha`` converts photons to DN at unit gain, ``sigma_d2`` is the noise added
before the amplifier and ``sigma_r2`` the noise added after it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raw_core import GainValue


def _linear(g) -> float:
    if isinstance(g, GainValue):
        return g.linear
    return float(g)


@dataclass(frozen=True)
class NoiseModel:
    alpha: float
    sigma_d2: float
    sigma_r2: float
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.sigma_d2 < 0 or self.sigma_r2 < 0:
            raise ValueError("noise variances must be nonnegative")

    def gain_line(self, g) -> tuple[float, float]:
        g = _linear(g)
        return g * self.alpha, g * g * self.sigma_d2 + self.sigma_r2

    def dark_floor(self, g) -> float:
        return self.gain_line(g)[1]

    def variance(self, g, mu):
        """Vectorized variance; no sign check on ``mu``."""
        a, b = self.gain_line(g)
        return a * np.asarray(mu, dtype=float) + b

    def to_dict(self) -> dict:
        d = {"alpha": self.alpha, "sigma_d2": self.sigma_d2, "sigma_r2": self.sigma_r2}
        if self.provenance:
            d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(float(d["alpha"]), float(d["sigma_d2"]), float(d["sigma_r2"]),
                   provenance=dict(d.get("provenance", {})))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "NoiseModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PixelDistribution:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def variance_at(model: NoiseModel, g, mu):
    """Predicted temporal variance (DN²) at expected black-subtracted value ``mu``."""
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 0):
        raise ValueError("mu must be nonnegative (black-subtracted expectation)")
    v = model.variance(g, mu_arr)
    return float(v) if v.ndim == 0 else v


def distribution_at(model: NoiseModel, g, mu: float) -> PixelDistribution:
    return PixelDistribution(float(mu), float(variance_at(model, g, mu)))


def sample_gaussian(model: NoiseModel, g, mu, rng: np.random.Generator, size=None):
    """Draw from N(mu, variance_at(model, g, mu))."""
    var = np.maximum(variance_at(model, g, mu), 0.0)
    shape = np.broadcast(np.asarray(mu), np.asarray(var)).shape if size is None else size
    z = rng.standard_normal(shape)
    out = np.asarray(mu, dtype=float) + np.sqrt(var) * z
    return float(out) if out.ndim == 0 else out


def gain_line_of(model: NoiseModel, g) -> tuple[float, float]:
    """(slope, intercept) of the mean-variance line at gain ``g``."""
    return model.gain_line(g)

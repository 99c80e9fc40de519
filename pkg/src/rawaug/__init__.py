"""Sensor noise calibration and noise-accounted augmentation for Bayer RAW images."""

__version__ = "0.1.0"

from .augment import (AugmentConfig, AugmentSpec, augment_frame, color_jitter,  # noqa: E402
                      exposure_gain_shift, noise_accounted_blur)
from .calibration import calibrate  # noqa: E402
from .isp import ToneCurve, develop  # noqa: E402
from .kernels import BlurKernel  # noqa: E402
from .noise_model import NoiseModel  # noqa: E402
from .raw_core import Burst, GainValue, RawFrame, load_frame, save_frame  # noqa: E402
from .sensor_sim import SensorSpec  # noqa: E402

__all__ = [
    "AugmentConfig", "AugmentSpec", "BlurKernel", "Burst", "GainValue", "NoiseModel",
    "RawFrame", "SensorSpec", "ToneCurve", "augment_frame", "calibrate", "color_jitter",
    "develop", "exposure_gain_shift", "load_frame", "noise_accounted_blur", "save_frame",
]

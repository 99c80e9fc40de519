import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rawaug.noise_model import (NoiseModel, PixelDistribution, distribution_at, gain_line_of,
                                sample_gaussian, variance_at)
from rawaug.raw_core import GainValue
from rawaug.rng import stream
from rawaug.sensor_sim import SensorSpec, capture_stack, uniform_scene


def test_variance_examples():
    m = NoiseModel(2.0, 4.0, 9.0)
    assert variance_at(m, 1.0, 50) == 113
    assert variance_at(m, GainValue(0), 0) == 13
    assert distribution_at(m, 2.0, 10) == PixelDistribution(10.0, 2 * 2 * 10 + 16 + 9)


def test_negative_mu_rejected():
    with pytest.raises(ValueError):
        variance_at(NoiseModel(1, 1, 1), 1.0, -1.0)


def test_invariants():
    with pytest.raises(ValueError):
        NoiseModel(0, 1, 1)
    with pytest.raises(ValueError):
        NoiseModel(1, -1, 1)
    with pytest.raises(ValueError):
        PixelDistribution(0.0, -1.0)


def test_gain_lines():
    m = NoiseModel(1.5, 2.0, 5.0)
    assert gain_line_of(m, 1.0) == (1.5, 7.0)
    assert gain_line_of(m, 2.0) == (3.0, 13.0)
    assert gain_line_of(NoiseModel(1.2, 0, 0), GainValue(6))[0] == pytest.approx(2.3944, abs=1e-4)


@given(st.floats(0.1, 5), st.floats(0, 50), st.floats(0, 100), st.floats(0.1, 30),
       st.floats(0.1, 30))
def test_gain_line_identities(alpha, sd2, sr2, g1, g2):
    m = NoiseModel(alpha, sd2, sr2)
    a1, b1 = m.gain_line(g1)
    _, b2 = m.gain_line(g2)
    assert a1 / g1 == pytest.approx(alpha, rel=1e-14)
    assert b2 - b1 == pytest.approx((g2**2 - g1**2) * sd2, rel=1e-9, abs=1e-9)


def test_variance_matches_simulator():
    m = NoiseModel(1.2, 6.0, 25.0)
    g = GainValue(12)
    u = 200 / (g.linear * m.alpha)  # so that mu = 200 DN
    spec = SensorSpec(m, quantize=False, black_level=256)
    x = capture_stack(uniform_scene((1000, 1000), u), g, spec, 1) - 256
    assert x.var() == pytest.approx(variance_at(m, g, 200.0), rel=0.01)


def test_sample_gaussian_moments_and_determinism():
    m = NoiseModel(1.2, 6.0, 25.0)
    x = sample_gaussian(m, 2.0, 100.0, stream(5), size=10**6)
    assert x.mean() == pytest.approx(100, rel=0.005)
    assert x.var() == pytest.approx(variance_at(m, 2.0, 100.0), rel=0.01)
    y = sample_gaussian(m, 2.0, 100.0, stream(5), size=10**6)
    assert np.array_equal(x, y)


def test_sample_gaussian_small_variance():
    m = NoiseModel(1e-12, 0.0, 0.0)
    assert sample_gaussian(m, 1.0, 0.0, stream(0)) == 0.0


def test_json_round_trip(tmp_path):
    m = NoiseModel(1.2, 6.0, 25.0, provenance={"gains_db": [6, 12]})
    m.save(tmp_path / "m.json")
    back = NoiseModel.load(tmp_path / "m.json")
    assert back == m and back.provenance == m.provenance

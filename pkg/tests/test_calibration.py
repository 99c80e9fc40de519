import numpy as np
import pytest

from rawaug.calibration import (CalibrationError, GainLine, PatchRegion, RansacConfig,
                                calibrate, collect_pairs, fit_gain, normality_sweep,
                                solve_noise_model, temporal_stats)
from rawaug.noise_model import NoiseModel
from rawaug.raw_core import Burst, GainValue, RawFrame
from rawaug.sensor_sim import (SensorSpec, calibration_bursts, capture_burst,
                               color_checker_scene, exposure_for, uniform_scene)
from rawaug.stats import LineFit


def burst_of(*arrays, gain_db=0.0):
    return Burst(tuple(RawFrame(np.asarray(a, float), gain_db=gain_db) for a in arrays))


def exact_line(slope, intercept, gain_db):
    return GainLine(gain_db, LineFit(slope, intercept, 1.0, np.ones(2, bool)))


def test_temporal_stats_hand_example():
    a = np.full((2, 2), 74.0)
    b = a.copy()
    b[0, 0] = 78.0
    st = temporal_stats(burst_of(a, b))
    assert st.mean[0, 0] == 12.0 and st.variance[0, 0] == 8.0
    assert st.variance[1, 1] == 0.0 and st.n_frames == 2


def test_temporal_stats_identical_frames_and_permutation(rng):
    frames = [rng.integers(64, 1000, (4, 4)) for _ in range(5)]
    st = temporal_stats(burst_of(*frames))
    st2 = temporal_stats(burst_of(*frames[::-1]))
    assert np.allclose(st.mean, st2.mean) and np.allclose(st.variance, st2.variance)
    assert np.all(temporal_stats(burst_of(frames[0], frames[0])).variance == 0)


def test_temporal_stats_oracle(sensor):
    # bright, low gain: 1% of the mean is ~5 standard errors over 100 frames
    g = GainValue(0)
    u = 2900.0
    burst = capture_burst(uniform_scene((24, 24), u), g, sensor, 100, seed=1)
    st = temporal_stats(burst)
    mu = g.linear * 1.2 * u
    var = sensor.model.variance(g, mu)
    assert np.all(np.abs(st.mean / mu - 1) < 0.01)
    assert np.mean(np.abs(st.variance / var - 1) < 0.3) > 0.95
    assert st.variance.mean() == pytest.approx(var, rel=0.01)


def test_collect_pairs_counts_and_bounds():
    st = temporal_stats(burst_of(np.full((64, 64), 100.0), np.full((64, 64), 102.0)))
    regs = [PatchRegion((0, 0)), PatchRegion((24, 24))]
    assert collect_pairs(st, regs).shape == (1152, 2)
    with pytest.raises(CalibrationError):
        collect_pairs(st, [PatchRegion((50, 50))])
    with pytest.raises(CalibrationError):
        collect_pairs(st, [])


def test_collect_pairs_drops_saturated():
    a = np.full((24, 24), 100.0)
    a[0, :] = 1023.0
    st = temporal_stats(burst_of(a, a + 1 * (a < 1023)))
    assert len(collect_pairs(st, [PatchRegion((0, 0))])) == 24 * 23


def test_fit_gain_exact_line():
    mu = np.linspace(1, 500, 400)
    gl = fit_gain(np.column_stack([mu, 2.4 * mu + 30]), 6.0)
    assert gl.fit.slope == pytest.approx(2.4) and gl.fit.intercept == pytest.approx(30)


def test_fit_gain_outliers(rng):
    mu = rng.uniform(1, 2000, 5000)
    var = (2.4 * mu + 30) * rng.chisquare(99, mu.size) / 99
    var[:250] *= 50  # defective pixels
    gl = fit_gain(np.column_stack([mu, var]), 6.0, seed=2)
    assert gl.fit.slope == pytest.approx(2.4, rel=0.03)
    assert not gl.fit.inlier_mask[:250].any()


def test_fit_gain_scaling_property(rng):
    mu = rng.uniform(1, 1000, 3000)
    var = (2.0 * mu + 50) * rng.chisquare(99, mu.size) / 99
    a = fit_gain(np.column_stack([mu, var]), 0.0)
    b = fit_gain(np.column_stack([mu, 3 * var]), 0.0)
    assert b.fit.slope == pytest.approx(3 * a.fit.slope, rel=1e-9)
    assert b.fit.intercept == pytest.approx(3 * a.fit.intercept, rel=1e-9)


def test_fit_gain_rejects_negative_slope():
    mu = np.linspace(1, 100, 100)
    with pytest.raises(CalibrationError):
        fit_gain(np.column_stack([mu, 500 - mu]), 0.0)


def test_fit_gain_on_simulator_6db(sensor):
    bursts, regions = calibration_bursts(sensor, gains_db=(6.0,), seed=5)
    pairs = np.concatenate([collect_pairs(temporal_stats(b), regions) for b in bursts])
    assert len(pairs) == 2 * 24 * 24 * 24
    gl = fit_gain(pairs, 6.0)
    assert gl.fit.slope == pytest.approx(GainValue(6).linear * 1.2, rel=0.03)
    assert gl.fit.r2 >= 0.98


def test_solve_exact_system():
    m = NoiseModel(1.5, 2.0, 5.0)
    lines = [exact_line(*m.gain_line(g), GainValue.from_linear(g).db) for g in (1.0, 2.0, 4.0)]
    rep = solve_noise_model(lines)
    assert rep.model.alpha == pytest.approx(1.5, rel=1e-12)
    assert rep.model.sigma_d2 == pytest.approx(2.0, rel=1e-10)
    assert rep.model.sigma_r2 == pytest.approx(5.0, rel=1e-10)
    assert rep.system_r2 == pytest.approx((1.0, 1.0))
    assert rep.clamped == [] and rep.model.provenance["gains_db"]


def test_solve_needs_two_gains():
    with pytest.raises(CalibrationError):
        solve_noise_model([exact_line(1.0, 2.0, 0.0)])
    with pytest.raises(CalibrationError):
        solve_noise_model([exact_line(0.0, 2.0, 0.0), exact_line(0.0, 3.0, 6.0)])


def test_solve_clamps_negative_terms():
    # intercepts fall with gain -> unconstrained sigma_d2 < 0
    lines = [exact_line(1.0, 30.0, 0.0), exact_line(2.0, 29.0, 6.0206), exact_line(4.0, 28.0, 12.0412)]
    rep = solve_noise_model(lines)
    assert rep.clamped == ["sigma_d2"]
    assert rep.model.sigma_d2 == 0.0 and rep.model.sigma_r2 == pytest.approx(29.0)


def test_calibrate_thread_invariant_and_region_forms(sensor):
    bursts, regions = calibration_bursts(sensor, gains_db=(6.0, 24.0), n_frames=30, seed=3)
    a = calibrate(bursts, regions, seed=1, threads=1)
    b = calibrate(bursts, [regions] * len(bursts), seed=1, threads=4)
    assert a.model == b.model and a.system_r2 == b.system_r2
    with pytest.raises(CalibrationError):
        calibrate(bursts, [regions])
    with pytest.raises(CalibrationError):
        calibrate([], regions)


def test_report_serializes(sensor):
    bursts, regions = calibration_bursts(sensor, gains_db=(6.0, 12.0), n_frames=20, seed=0)
    rep, pooled = calibrate(bursts, regions, keep_pairs=True)
    d = rep.to_dict()
    assert {g["gain_db"] for g in d["per_gain"]} == {6.0, 12.0}
    assert set(pooled) == {6.0, 12.0}
    assert NoiseModel.from_dict(rep.model.to_dict()) == rep.model


def test_ransac_config():
    with pytest.raises(ValueError):
        RansacConfig(residual="huber")
    assert RansacConfig(threshold=3.0).band(np.ones(3), 100) == 3.0
    assert RansacConfig(residual="absolute").band(np.array([0.0, 10.0, 20.0, 30.0, 40.0]), 100) == 2.0


# --- normality ---------------------------------------------------------------

def test_normality_bright_burst(sensor):
    base = uniform_scene((32, 32), 1.0)
    scene = base.scaled(exposure_for(sensor, 12.0, base, 0.5))
    sweep = normality_sweep(capture_burst(scene, 12.0, sensor, 100, seed=8))
    assert sweep.pass_fraction(min_mean=100) >= 0.9
    assert sum(b["n_pixels"] for b in sweep.buckets) == 32 * 32


def test_normality_dark_burst_reports_sparsity():
    spec = SensorSpec(NoiseModel(1.0, 0.05, 0.1))
    sweep = normality_sweep(capture_burst(uniform_scene((16, 16), 0.3), 0.0, spec, 100, seed=1))
    assert sweep.pass_fraction() < 0.5
    assert all(b["sparse_pixels"] > 0 for b in sweep.buckets)
    assert sum(b["sparse_failures"] for b in sweep.buckets) > 0


def test_normality_constant_pixels_and_short_bursts():
    frames = [np.full((4, 4), 100.0)] * 25
    sweep = normality_sweep(burst_of(*frames))
    assert sweep.zero_variance == 16
    with pytest.raises(CalibrationError):
        normality_sweep(burst_of(*frames[:10]))


def test_normality_more_buckets_than_pixels(rng):
    frames = [rng.normal(500, 5, (2, 2)) for _ in range(30)]
    sweep = normality_sweep(burst_of(*frames), buckets=10)
    assert len(sweep.buckets) == 4  # empty buckets are omitted

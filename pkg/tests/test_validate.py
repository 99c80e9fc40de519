import json

import numpy as np
import pytest

from rawaug import validate as val
from rawaug.kernels import BlurKernel
from rawaug.noise_model import NoiseModel
from rawaug.sensor_sim import SensorSpec, color_checker_scene, exposure_for
from rawaug.stats import ols_line

SPEC = SensorSpec(NoiseModel(1.2, 6.0, 25.0))
GAIN = 24.0


@pytest.fixture(scope="module")
def chart():
    base = color_checker_scene(patch_size=32)
    return base.scaled(exposure_for(SPEC, GAIN, base, 0.7))


def test_unit_contrast_ours_matches(chart):
    rep = val.alignment_experiment(SPEC, chart, GAIN, 1.0, "ours", n_frames=60, seed=1)
    assert rep.slope_rel_err < 0.02
    assert rep.intercept_rel_err < 0.05
    assert rep.n_pairs > 20_000


def test_ours_tracks_real_line_at_half_contrast(chart):
    rep = val.alignment_experiment(SPEC, chart, GAIN, 0.5, "ours", n_frames=100, seed=2)
    assert rep.slope_rel_err <= 0.05 and rep.intercept_rel_err <= 0.05
    assert rep.ks[1] > 0.01


def test_wo_prior_sits_above_real_line(chart):
    rep = val.alignment_experiment(SPEC, chart, GAIN, 0.5, "wo_prior", n_frames=60, seed=3)
    mu = np.linspace(0, rep.real_pairs[:, 0].max(), 50)
    assert np.all(rep.converted_line.predict(mu) > rep.real_line.predict(mu))


def test_naive_jitter_sits_below_real_line(chart):
    rep = val.alignment_experiment(SPEC, chart, GAIN, 0.5, "none", n_frames=60, seed=4)
    assert rep.converted_line.slope < 0.7 * rep.real_line.slope


def test_identity_blur_aligns(chart):
    rep = val.blur_alignment_experiment(SPEC, chart, GAIN, BlurKernel.identity(),
                                        "noise_accounted", n_frames=60, seed=5)
    assert rep.slope_rel_err < 0.02 and rep.extra["dark_floor_ratio"] == pytest.approx(1, abs=0.05)


def test_naive_blur_shrinks_dark_floor(chart):
    k = BlurKernel.linear(2)
    rep = val.blur_alignment_experiment(SPEC, chart, GAIN, k, "naive", n_frames=60, seed=6)
    assert rep.extra["dark_floor_ratio"] == pytest.approx(k.sum_sq, abs=0.03)


def test_csv_refit_reproduces_lines(chart, tmp_path):
    rep = val.alignment_experiment(SPEC, chart, GAIN, 0.5, "ours", n_frames=50, seed=7)
    jpath, cpath = rep.write(tmp_path, "job")
    pairs = val.read_pairs_csv(cpath)
    for name, line in (("real", rep.real_line), ("converted", rep.converted_line)):
        refit = ols_line(pairs[name])
        assert refit.slope == pytest.approx(line.slope, rel=1e-9)
        assert refit.intercept == pytest.approx(line.intercept, rel=1e-9)
    d = json.loads(jpath.read_text())
    assert d["method"] == "ours" and d["n_pairs"] == rep.n_pairs


def test_deterministic_and_thread_invariant(chart):
    a = val.alignment_experiment(SPEC, chart, GAIN, 0.3, "ours", n_frames=50, seed=8, threads=1)
    b = val.alignment_experiment(SPEC, chart, GAIN, 0.3, "ours", n_frames=50, seed=8, threads=4)
    assert np.array_equal(a.converted_pairs, b.converted_pairs)
    assert np.array_equal(a.real_pairs, b.real_pairs)


def test_grid_keys(chart):
    grid = val.alignment_grid(SPEC, chart, GAIN, [0.5], ["ours", "none"], n_frames=50, seed=0)
    assert set(grid) == {"ours_x0.5", "none_x0.5"}


@pytest.mark.parametrize("kw", [{"contrast": 0.0}, {"contrast": 1.5}, {"method": "bogus"},
                                {"n_frames": 10}])
def test_alignment_errors(chart, kw):
    args = {"contrast": 0.5, "method": "ours", "n_frames": 100} | kw
    with pytest.raises(val.ValidationError):
        val.alignment_experiment(SPEC, chart, GAIN, args["contrast"], args["method"],
                                 n_frames=args["n_frames"])


def test_compare_needs_enough_pairs():
    pts = np.column_stack([np.arange(10.0), np.arange(10.0)])
    with pytest.raises(val.ValidationError):
        val.compare(pts, pts, 100, "ours", "x")


def test_bench_schema(tmp_path):
    rep = val.bench(SPEC, frame_size=(64, 64), repetitions=3)
    assert rep["frame_size"] == [64, 64]
    for name, row in rep["operators"].items():
        assert set(row) == {"median_s", "p95_s", "megapixels_per_s"}
        assert row["median_s"] > 0 and row["p95_s"] >= row["median_s"]
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(rep))
    assert json.loads(path.read_text()) == rep
    with pytest.raises(val.ValidationError):
        val.bench(SPEC, (64, 64), repetitions=1)


def test_normality_csv(tmp_path):
    from rawaug.sensor_sim import capture_burst, uniform_scene
    burst = capture_burst(uniform_scene((16, 16), 300.0), 12.0, SPEC, 50, seed=1)
    sweep = val.normality_report(burst, buckets=4)
    val.write_normality_csv(sweep, tmp_path / "n.csv")
    val.write_normality_points(sweep, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert len(lines) == 1 + 256
    assert len((tmp_path / "n.csv").read_text().splitlines()) == 1 + len(sweep.buckets)

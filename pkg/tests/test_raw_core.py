import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rawaug.raw_core import (Burst, GainValue, RawFormatError, RawFrame, channel_index_map,
                             channel_mask, load_burst, load_frame, merge_planes, normalize,
                             save_burst, save_frame, split_planes)


def frame(h=4, w=6, **kw):
    px = np.arange(h * w, dtype=float).reshape(h, w) + 64
    return RawFrame(px, **kw)


def test_gain_db_to_linear():
    assert GainValue(0).linear == 1.0
    assert GainValue(20).linear == pytest.approx(10.0)
    assert GainValue(6).linear == pytest.approx(1.99526, rel=1e-5)
    assert GainValue.from_linear(4.0).db == pytest.approx(12.0412, rel=1e-5)
    with pytest.raises(ValueError):
        GainValue.from_linear(0)


@pytest.mark.parametrize("shape", [(3, 4), (4, 5)])
def test_odd_dimensions_rejected(shape):
    with pytest.raises(RawFormatError):
        RawFrame(np.zeros(shape))


def test_bad_cfa_and_levels_rejected():
    with pytest.raises(RawFormatError):
        RawFrame(np.zeros((2, 2)), cfa="RGBG")
    with pytest.raises(RawFormatError):
        RawFrame(np.zeros((2, 2)), black_level=1023, white_level=1023)
    with pytest.raises(RawFormatError):
        RawFrame(np.zeros((2, 2)), bit_depth=10, white_level=4095)


def test_pixels_are_read_only_copies():
    src = np.full((2, 2), 100.0)
    f = RawFrame(src)
    src[0, 0] = 0
    assert f.pixels[0, 0] == 100
    with pytest.raises(ValueError):
        f.pixels[0, 0] = 1


def test_with_signal_clamps_to_raw_range():
    f = frame()
    out = f.with_signal(np.full((4, 6), 5000.0))
    assert np.all(out.pixels == f.white_level)
    out = f.with_signal(np.full((4, 6), -500.0))
    assert np.all(out.pixels == 0.0)


def test_save_load_round_trip(tmp_path):
    f = frame(cfa="GBRG", gain_db=12.0)
    save_frame(f, tmp_path / "a.raw16")
    g = load_frame(tmp_path / "a.raw16")
    assert np.array_equal(f.pixels, g.pixels)
    assert g.metadata() == f.metadata()
    meta = json.loads((tmp_path / "a.json").read_text())
    assert meta["width"] == 6 and meta["height"] == 4
    assert (tmp_path / "a.raw16").stat().st_size == 4 * 6 * 2


def test_save_rounds_half_to_even(tmp_path):
    f = RawFrame(np.array([[100.5, 101.5], [102.5, 103.4]]))
    save_frame(f, tmp_path / "r.raw16")
    assert load_frame(tmp_path / "r.raw16").pixels.tolist() == [[100, 102], [102, 103]]


def test_load_errors(tmp_path):
    f = frame()
    save_frame(f, tmp_path / "a.raw16")
    (tmp_path / "b.raw16").write_bytes(b"\0" * 48)
    with pytest.raises(RawFormatError, match="sidecar"):
        load_frame(tmp_path / "b.raw16")
    (tmp_path / "a.raw16").write_bytes(b"\0" * 10)
    with pytest.raises(RawFormatError, match="payload"):
        load_frame(tmp_path / "a.raw16")
    (tmp_path / "a.raw16").write_bytes(np.full(24, 2000, "<u2").tobytes())
    with pytest.raises(RawFormatError, match="exceeds"):
        load_frame(tmp_path / "a.raw16")


def test_save_rejects_out_of_range(tmp_path):
    f = RawFrame(np.full((2, 2), 1023.0), bit_depth=10)
    save_frame(f, tmp_path / "ok.raw16")
    with pytest.raises(RawFormatError, match="outside"):
        save_frame(RawFrame(np.full((2, 2), 1100.0), bit_depth=10), tmp_path / "bad.raw16")
    with pytest.raises(RawFormatError, match="normalized"):
        save_frame(normalize(f), tmp_path / "n.raw16")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from(["RGGB", "BGGR", "GRBG", "GBRG"]),
       st.integers(8, 16), st.data())
def test_round_trip_property(tmp_path_factory, hq, wq, cfa, bits, data):
    top = 2**bits - 1
    vals = data.draw(st.lists(st.integers(0, top), min_size=4 * hq * wq, max_size=4 * hq * wq))
    f = RawFrame(np.array(vals, float).reshape(2 * hq, 2 * wq), cfa=cfa, bit_depth=bits,
                 black_level=0.0, white_level=float(top))
    p = tmp_path_factory.mktemp("rt") / "f.raw16"
    save_frame(f, p)
    assert np.array_equal(load_frame(p).pixels, f.pixels)


def test_burst_checks_and_io(tmp_path):
    a, b = frame(), frame()
    burst = Burst((a, b))
    assert len(burst) == 2 and burst.stack().shape == (2, 4, 6)
    with pytest.raises(RawFormatError):
        Burst((a,))
    with pytest.raises(RawFormatError):
        Burst((a, frame(gain_db=6.0)))
    save_burst(burst, tmp_path / "b")
    back = load_burst(tmp_path / "b")
    assert np.array_equal(back.stack(), burst.stack())
    with pytest.raises(RawFormatError):
        load_burst(tmp_path / "empty")


def test_channel_masks_partition_the_mosaic():
    for cfa in ("RGGB", "BGGR", "GRBG", "GBRG"):
        masks = [channel_mask((4, 4), c, cfa) for c in "RGB"]
        assert np.array_equal(sum(m.astype(int) for m in masks), np.ones((4, 4), int))
        assert masks[1].sum() == 8
        idx = channel_index_map((4, 4), cfa)
        for i, m in enumerate(masks):
            assert np.all(idx[m] == i)
    assert channel_mask((2, 2), "R", "RGGB")[0, 0]
    assert channel_mask((2, 2), "B", "GRBG")[1, 0]


def test_split_merge_inverse():
    a = np.arange(48.0).reshape(6, 8)
    assert np.array_equal(merge_planes(split_planes(a)), a)


def test_normalize():
    f = RawFrame(np.array([[64.0, 1023.0], [543.5, 2000.0 - 977]]))
    n = normalize(f)
    assert n.normalized and n.pixels[0, 0] == 0 and n.pixels[0, 1] == 1
    assert n.pixels[1, 0] == pytest.approx(0.5)
    assert normalize(n) is n

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqstream.errors import ConfigError, ParseError, ValidationError
from eqstream.events import (EventStream, SensorGeometry, TensorizeConfig, read_events, steps_to_cover,
                             tensorize, tensorize_reference, tensorize_sequence, validate_stream,
                             write_events)
from eqstream.synthetic import random_stream
from reference_impl import ref_tensorize


def test_validate_clean(four_events):
    rep = validate_stream(four_events)
    assert rep.ok
    assert rep.out_of_bounds.count == rep.non_monotone.count == rep.invalid_polarity.count == 0


def test_validate_out_of_bounds():
    s = EventStream.from_events(SensorGeometry(4, 4), [(0, 1, 1, 1), (1, 4, 0, 1), (2, 0, 0, -1)])
    rep = validate_stream(s)
    assert rep.out_of_bounds.count == 1 and rep.out_of_bounds.first_index == 1
    assert rep.non_monotone.count == 0


def test_validate_non_monotone_and_polarity():
    s = EventStream.from_events(SensorGeometry(4, 4), [(5, 0, 0, 1), (3, 0, 0, 1), (4, 0, 0, 0)])
    rep = validate_stream(s)
    assert rep.non_monotone.count == 1 and rep.non_monotone.first_index == 1
    assert rep.invalid_polarity.count == 1 and rep.invalid_polarity.first_index == 2
    assert not rep.ok


def test_tensorize_worked_example(four_events):
    cfg = TensorizeConfig(num_bins=2, window_us=100, window_start=0)
    out = tensorize(four_events, cfg)
    expected, skipped = ref_tensorize([(10, 0, 0, 1), (20, 1, 0, -1), (60, 0, 1, 1), (60, 0, 1, 1)], 2, 2, 2, 0, 100)
    assert out.shape == (4, 2, 2)
    np.testing.assert_array_equal(out.values, expected)
    assert out.values[1, 0, 0] == 1 and out.values[0, 0, 1] == 1 and out.values[3, 1, 0] == 2
    assert out.values.sum() == 4 and out.skipped == skipped == 0


def test_tensorize_empty():
    g = SensorGeometry(5, 3)
    out = tensorize(EventStream(g), TensorizeConfig(3, 100, 0))
    assert out.shape == (6, 3, 5) and not out.values.any()


def test_tensorize_exclusive_end():
    s = EventStream.from_events(SensorGeometry(2, 2), [(100, 0, 0, 1)])
    out = tensorize(s, TensorizeConfig(2, 100, 0))
    assert not out.values.any() and out.skipped == 1


@pytest.mark.parametrize("bins,window", [(0, 100), (2, 0)])
def test_tensorize_bad_config(bins, window):
    with pytest.raises(ConfigError):
        TensorizeConfig(bins, window, 0)


def test_last_bin_absorbs_remainder():
    # 3 bins over 10 us: edges 0, 4, 7 (ceil(10k/3)), end 10
    cfg = TensorizeConfig(3, 10, 0)
    assert cfg.bin_edges().tolist() == [0, 4, 7, 10]
    s = EventStream.from_events(SensorGeometry(1, 1), [(t, 0, 0, 1) for t in range(10)])
    per_bin = tensorize(s, cfg).values[1::2, 0, 0]
    assert per_bin.tolist() == [4, 3, 3]


def test_tensorize_sequence(four_events):
    cfg = TensorizeConfig(2, 100, 0)
    one = tensorize_sequence(four_events, cfg, 1)
    np.testing.assert_array_equal(one[0].values, tensorize(four_events, cfg).values)
    two = tensorize_sequence(four_events, TensorizeConfig(2, 50, 0), 2)
    assert two[0].values.sum() == 2 and two[1].values.sum() == 2
    assert two[0].values[1, 0, 0] == 1 and two[0].values[0, 0, 1] == 1
    assert two[1].values[1, 1, 0] == 2      # t=60 falls in bin 0 of step 1
    empty = tensorize_sequence(EventStream(SensorGeometry(2, 2)), cfg, 3)
    assert len(empty) == 3 and all(not t.values.any() for t in empty)
    with pytest.raises(ConfigError):
        tensorize_sequence(four_events, cfg, 0)


def test_steps_to_cover(four_events):
    assert steps_to_cover([four_events], TensorizeConfig(2, 50, 0)) == 2
    assert steps_to_cover([four_events], TensorizeConfig(2, 61, 0)) == 1


@st.composite
def streams(draw, max_events=300):
    w = draw(st.integers(1, 6))
    h = draw(st.integers(1, 6))
    n = draw(st.integers(0, max_events))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 400, size=n))
    # a few coordinates past the edge on purpose
    x = rng.integers(0, w + 1, size=n)
    y = rng.integers(0, h + 1, size=n)
    p = np.where(rng.random(n) < 0.5, 1, -1)
    return EventStream(SensorGeometry(w, h), t, x, y, p)


tensor_cfgs = st.builds(TensorizeConfig, st.integers(1, 7), st.integers(1, 300), st.integers(-50, 200))


@settings(max_examples=200, deadline=None)
@given(streams(), tensor_cfgs)
def test_tensorize_matches_loop_and_conserves(stream, cfg):
    fast = tensorize(stream, cfg)
    slow = tensorize_reference(stream, cfg)
    np.testing.assert_array_equal(fast.values, slow.values)
    assert fast.skipped == slow.skipped
    assert fast.values.sum() + fast.skipped == len(stream)
    assert (fast.values >= 0).all()


@settings(max_examples=100, deadline=None)
@given(streams(), st.integers(1, 6), st.integers(1, 150), st.integers(0, 100))
def test_window_shift_partition(stream, bins, window, t0):
    first = tensorize(stream, TensorizeConfig(bins, window, t0))
    second = tensorize(stream, TensorizeConfig(bins, window, t0 + window))
    union = tensorize(stream, TensorizeConfig(2 * bins, 2 * window, t0))
    np.testing.assert_array_equal(np.concatenate([first.values, second.values]), union.values)


@settings(max_examples=60, deadline=None)
@given(streams(), st.integers(1, 4), st.integers(1, 100), st.integers(1, 4))
def test_sequence_concatenation(stream, bins, window, steps):
    seq = tensorize_sequence(stream, TensorizeConfig(bins, window, 0), steps)
    union = tensorize(stream, TensorizeConfig(bins * steps, window * steps, 0))
    np.testing.assert_array_equal(np.concatenate([t.values for t in seq]), union.values)


# ---------------------------------------------------------------------------
# file formats


@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_roundtrip_small(tmp_path, four_events, fmt):
    path = tmp_path / f"ev.{fmt}"
    write_events(four_events, path, fmt)
    back = read_events(path, fmt, four_events.geometry)
    assert back == four_events
    again = tmp_path / f"again.{fmt}"
    write_events(back, again, fmt)
    assert path.read_bytes() == again.read_bytes()


def test_binary_layout(tmp_path, four_events):
    path = tmp_path / "ev.evs"
    write_events(four_events, path, "binary")
    raw = path.read_bytes()
    assert raw[:4] == b"EVS1"
    assert len(raw) == 4 + 2 + 2 + 2 + 8 + 4 * 13
    assert int.from_bytes(raw[10:18], "little") == 4
    # third record: t=60, x=0, y=1, p=+1
    rec = raw[18 + 2 * 13:18 + 3 * 13]
    assert int.from_bytes(rec[:8], "little") == 60 and rec[8:10] == b"\0\0" and rec[10:12] == b"\1\0"
    assert rec[12] == 1


def test_text_layout(tmp_path, four_events):
    path = tmp_path / "ev.csv"
    write_events(four_events, path, "text")
    assert path.read_text().splitlines() == ["t_us,x,y,p", "10,0,0,1", "20,1,0,-1", "60,0,1,1", "60,0,1,1"]


def test_format_sniffing(tmp_path, four_events):
    write_events(four_events, tmp_path / "a", "binary")
    write_events(four_events, tmp_path / "b", "text")
    assert read_events(tmp_path / "a") == four_events
    assert read_events(tmp_path / "b", geometry=SensorGeometry(2, 2)) == four_events


def test_text_zero_polarity_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t_us,x,y,p\n1,0,0,1\n2,0,0,0\n3,0,0,-1\n")
    with pytest.raises(ParseError) as exc:
        read_events(path, "text")
    assert exc.value.offset == 3


def test_text_malformed_record(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t_us,x,y,p\n1,0,0,1\n2,0,zz,1\n")
    with pytest.raises(ParseError) as exc:
        read_events(path, "text")
    assert exc.value.offset == 3


def test_text_missing_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0,0,1\n")
    with pytest.raises(ParseError) as exc:
        read_events(path, "text")
    assert exc.value.offset == 1


def test_binary_truncated_and_bad_magic(tmp_path, four_events):
    path = tmp_path / "ev.evs"
    write_events(four_events, path, "binary")
    raw = path.read_bytes()
    (tmp_path / "trunc.evs").write_bytes(raw[:-5])
    with pytest.raises(ParseError):
        read_events(tmp_path / "trunc.evs", "binary")
    (tmp_path / "magic.evs").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParseError):
        read_events(tmp_path / "magic.evs", "binary")


def test_geometry_mismatch(tmp_path, four_events):
    path = tmp_path / "ev.evs"
    write_events(four_events, path, "binary")
    with pytest.raises(ValidationError):
        read_events(path, "binary", SensorGeometry(3, 3))
    write_events(four_events, tmp_path / "ev.csv", "text")
    with pytest.raises(ValidationError):
        read_events(tmp_path / "ev.csv", "text", SensorGeometry(1, 1))


@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_roundtrip_million_events(tmp_path, fmt):
    g = SensorGeometry(640, 480)
    s = random_stream(g, 1_000_000, seed=7, t_start=10**9, duration_us=10**7)
    path = tmp_path / "big"
    write_events(s, path, fmt)
    back = read_events(path, fmt, g)
    for k in "txyp":
        np.testing.assert_array_equal(getattr(back, k), getattr(s, k))
    if fmt == "binary":
        write_events(back, tmp_path / "big2", fmt)
        assert (tmp_path / "big2").read_bytes() == path.read_bytes()

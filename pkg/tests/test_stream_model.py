from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from offsetlag.errors import DomainError, InvariantViolation, UndefinedRatioError, UnplacedPeerError
from offsetlag.stream_model import (
    BufferMessage,
    EventTimeline,
    PeerState,
    StreamConfig,
    TrackerState,
    as_fraction,
    buffer_occupation,
    buffer_width,
    decode_bitmap,
    encode_bitmap,
    encode_bitmap_b64,
    offset_lag,
    playable_video,
    scope_factor,
    service_curve,
)
from offsetlag.trace_analysis import tracker_rate


def bm(bits, offset=0):
    return BufferMessage(1, 0.0, offset, bits)


def test_service_curve_examples():
    assert service_curve(StreamConfig(10), 0) == 0
    assert service_curve(StreamConfig(10), 7.5) == 75
    # tracker window of two minutes at rate 6 is 720 chunks, and back again
    assert service_curve(StreamConfig(6), 120) == 720
    assert tracker_rate(service_curve(StreamConfig(6), 120)) == 6


def test_service_curve_rejects_negative_time():
    with pytest.raises(DomainError):
        service_curve(StreamConfig(10), -0.1)


def test_as_fraction_uses_decimal_repr():
    assert as_fraction(0.34) == Fraction(17, 50)


@given(st.fractions(min_value=Fraction(1, 100), max_value=100), st.floats(0, 1e5), st.floats(0, 1e5))
def test_service_curve_monotone(r, t1, t2):
    cfg = StreamConfig(r)
    lo, hi = sorted((t1, t2))
    assert service_curve(cfg, lo) <= service_curve(cfg, hi)


def test_tracker_offset_never_ahead():
    cfg, trk = StreamConfig(10), TrackerState(1200)
    for t in (0, 5, 120, 121.3, 1e4):
        assert trk.offset(cfg, t) <= service_curve(cfg, t)
    msg = trk.buffer_message(cfg, 500)
    assert msg.scope == 5000 and msg.width == 1200 and playable_video(msg) == 1201


def test_offset_lag_examples():
    cfg = StreamConfig(10)
    p = PeerState(1, offset=900, scope=950)
    assert offset_lag(p, cfg, 100) == 100
    assert offset_lag(PeerState(1, offset=0), cfg, 0) == 0
    with pytest.raises(InvariantViolation):
        offset_lag(PeerState(1, offset=2000), cfg, 100)
    with pytest.raises(UnplacedPeerError):
        offset_lag(PeerState(1), cfg, 100)


def test_draining_peer_lag_is_constant():
    cfg = StreamConfig(10)
    f0, t = 700, 100.0
    lags = {offset_lag(PeerState(1, offset=f0 + service_curve(cfg, t + d) - service_curve(cfg, t)), cfg, t + d)
            for d in (0, 50)}
    assert lags == {300}


def test_buffer_width_examples():
    assert buffer_width(PeerState(1, offset=10000, scope=10500)) == 500
    assert buffer_width(PeerState(1, offset=5, scope=5)) == 0
    w = buffer_width(PeerState(1))
    assert w == 0 and w.empty
    assert not buffer_width(PeerState(1, offset=5, scope=5)).empty


def test_scope_factor_examples():
    cfg = StreamConfig(1)
    assert scope_factor(PeerState(1, offset=0, scope=500), cfg, 2000) == 0.25
    assert scope_factor(PeerState(1, offset=0, scope=2000), cfg, 2000) == 1.0
    assert scope_factor(PeerState(1, offset=0, scope=1), cfg, 2000) == 0.0005
    with pytest.raises(UndefinedRatioError):
        scope_factor(PeerState(1, offset=10, scope=10), cfg, 10)
    with pytest.raises(InvariantViolation):
        scope_factor(PeerState(1, offset=0, scope=30), cfg, 20)


def test_playable_video_and_occupation():
    assert playable_video(bm("11101")) == 3
    assert buffer_occupation(bm("11101")) == 4
    assert playable_video(bm("1" * 100)) == 100 and bm("1" * 100).width == 99
    assert playable_video(bm("1000001")) == 1
    empty = BufferMessage(3, 0.0, None)
    assert buffer_occupation(empty) == 0 and playable_video(empty) == 0
    assert buffer_occupation(bm("1" * 37)) == 37


def test_buffer_message_invariants():
    with pytest.raises(InvariantViolation):
        bm("0111")
    with pytest.raises(InvariantViolation):
        bm("1110")
    with pytest.raises(DomainError):
        bm("1x1")
    with pytest.raises(InvariantViolation):
        BufferMessage(1, 0.0, None, "1")
    assert len(bm("10101").bitmap) == bm("10101").width + 1


bitmaps = st.text("01", min_size=0, max_size=300).map(lambda s: "1" + s + "1")


@given(bitmaps)
def test_bitmap_codec_round_trip(bits):
    assert decode_bitmap(encode_bitmap(bits)) == bits
    assert decode_bitmap(encode_bitmap_b64(bits)) == bits
    assert decode_bitmap(bits) == bits


@given(bitmaps, st.integers(0, 2**40))
def test_buffer_message_dict_round_trip(bits, offset):
    m = BufferMessage(7, 1.5, offset, bits)
    assert BufferMessage.from_dict(m.to_dict()) == m


@given(bitmaps)
def test_prefix_le_popcount_le_width(bits):
    m = bm(bits)
    assert 1 <= playable_video(m) <= buffer_occupation(m) <= m.width + 1


def test_decode_rejects_garbage():
    for text in ("rle:1,a", "rle:-1", "b64:99:AA==", "b64:zz", "xyz"):
        with pytest.raises(DomainError):
            decode_bitmap(text)


def test_event_timeline():
    tl = EventTimeline(0.058, 1.419, 2.566, 3.0, 71.419)
    assert tl.setup_time == pytest.approx(70.0)
    with pytest.raises(InvariantViolation):
        EventTimeline(2.0, 1.0, 3.0, 3.0, 70.0)
    with pytest.raises(InvariantViolation):
        EventTimeline(0.0, 1.0, 3.0, 3.0, 0.5)

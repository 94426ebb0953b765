import pytest
from hypothesis import given, strategies as st

from offsetlag.errors import DomainError, InvariantViolation, NoReferenceError
from offsetlag.lag_dynamics import next_lag_pp_lag
from offsetlag.placement import (
    FixedPadding,
    GoodPeerPolicy,
    PeerResponse,
    PPLag,
    PPWidth,
    place,
    place_fixed_padding,
    place_pp_lag,
    place_pp_width,
    round_half_up,
    select_good_peer,
)
from offsetlag.stream_model import BufferMessage, playable_video


def msg(offset, width, sender=1, t=0.0, playable=None):
    if playable is None or playable >= width + 1:
        bits = "1" * (width + 1)
    else:
        bits = "1" * playable + "0" * (width - playable) + "1"
    return BufferMessage(sender, t, offset, bits)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999, -0.5)] == [1, 2, 3, 2, 0]


def test_fixed_padding_examples():
    assert place_fixed_padding(msg(10000, 10), 700).theta == 10700
    assert place_fixed_padding(msg(0, 0), 0).theta == 0
    with pytest.raises(NoReferenceError):
        place_fixed_padding(BufferMessage(1, 0.0, None), 5)
    with pytest.raises(DomainError):
        FixedPadding(-1)


def test_pp_lag_examples():
    assert place_pp_lag(msg(10000, 100), 12000, 0.34).theta == 10680
    assert place_pp_lag(msg(500, 0), 500, 0.9).theta == 500
    with pytest.raises(InvariantViolation):
        place_pp_lag(msg(500, 10), 499, 0.34)


def test_pp_lag_one_hop_lag():
    # reference lag 2000, drain after r*tau = 700 chunks of further service
    d = place_pp_lag(msg(10000, 100), 12000, 0.34)
    host_lag = 12000 + 700 - d.theta
    assert host_lag == 2020 == pytest.approx(next_lag_pp_lag(2000, 0.34, 10, 70))


def test_pp_width_examples():
    assert place_pp_width(msg(10000, 500), 0.34).theta == 10170
    assert place_pp_width(msg(42, 0), 0.34).theta == 42


def test_width_vs_lag_scenario_with_short_buffer():
    # reference lags 1000 chunks behind the source but holds only 50 of them
    f_p, s = 20000, 21000
    ref = BufferMessage(1, 0.0, f_p, "1" * 50)
    lag_theta = place_pp_lag(ref, s, 0.3).theta
    width_theta = place_pp_width(ref, 0.3).theta
    assert lag_theta == f_p + 300 and lag_theta > ref.scope
    assert width_theta == f_p + 15 and f_p <= width_theta <= ref.scope


def test_alpha_domain():
    for a in (0, 1, -0.1, 1.5):
        with pytest.raises(DomainError):
            PPLag(a)
        with pytest.raises(DomainError):
            PPWidth(a)


@given(st.integers(0, 10**9), st.integers(0, 10**5), st.floats(0.01, 0.99))
def test_pp_width_inside_reference_buffer(offset, width, alpha):
    ref = msg(offset, width)
    d = place_pp_width(ref, alpha)
    assert ref.offset <= d.theta <= ref.scope


@given(st.integers(0, 10**9), st.integers(0, 10**5), st.floats(0.01, 0.99))
def test_pp_lag_equals_pp_width_at_full_scope(offset, width, alpha):
    ref = msg(offset, width)
    # scope equal to s(t0) means beta = 1
    assert place_pp_lag(ref, ref.scope, alpha).theta == place_pp_width(ref, alpha).theta


@given(st.integers(0, 10**6), st.integers(0, 5000), st.integers(0, 5000))
def test_fixed_padding_lag_relation(offset, lag_ref, rt):
    # host lag = reference lag + (r*tau - d); with d = r*tau the lags agree
    ref = msg(offset, 0)
    s_t0 = offset + lag_ref
    for d in (rt, rt // 2):
        theta = place_fixed_padding(ref, d).theta
        assert s_t0 + rt - theta == lag_ref + rt - d


def test_place_dispatch():
    ref = msg(1000, 200)
    assert place(FixedPadding(7), ref, 1500).theta == 1007
    assert place(PPLag(0.5), ref, 1500).theta == 1250
    assert place(PPWidth(0.5), ref, 1500).theta == 1100
    with pytest.raises(TypeError):
        place("fp", ref, 1500)


def responses(spec, lag=1000, base=1.0, gap=0.3):
    out = []
    for i, frac in enumerate(spec):
        width = 800
        playable = max(1, int(frac * lag))
        out.append(PeerResponse(msg(5000 + 10 * i, width, sender=i + 1, t=base + i * gap, playable=playable), lag,
                                base + i * gap))
    return out


POLICY = GoodPeerPolicy(0.36, 5.0)


def test_good_peer_first_accepted():
    rs = responses([0.5, 0.1])
    d = select_good_peer(rs, POLICY, 0.34)
    assert d.reference_peer == 1 and d.was_good_peer
    assert d.theta == place_pp_width(rs[0].bm, 0.34).theta


def test_good_peer_second_replaces_first():
    rs = responses([0.1, 0.4])
    d = select_good_peer(rs, POLICY, 0.34, timer_started_at=0.5)
    assert d.reference_peer == 2 and d.was_good_peer
    assert d.theta == place_pp_width(rs[1].bm, 0.34).theta


def test_good_peer_timeout_keeps_first():
    rs = responses([0.2, 0.2, 0.2, 0.2])
    d = select_good_peer(rs, POLICY, 0.34)
    assert d.reference_peer == 1 and not d.was_good_peer
    assert d.theta == place_pp_width(rs[0].bm, 0.34).theta


def test_good_peer_late_response_ignored():
    rs = responses([0.1, 0.9], gap=6.0)
    d = select_good_peer(rs, POLICY, 0.34)
    assert d.reference_peer == 1 and not d.was_good_peer


def test_good_peer_needs_a_response():
    with pytest.raises(NoReferenceError):
        select_good_peer([], POLICY, 0.34)


def test_threshold_boundary():
    ref = msg(0, 999, playable=360)
    assert playable_video(ref) == 360
    assert POLICY.accepts(ref, 1000)
    assert not POLICY.accepts(msg(0, 999, playable=359), 1000)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_good_peer_deterministic(fracs):
    rs = responses(fracs)
    assert select_good_peer(rs, POLICY, 0.34) == select_good_peer(list(rs), POLICY, 0.34)

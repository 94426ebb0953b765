"""Initial-offset placement schemes and good-peer selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional, Union

from offsetlag.errors import DomainError, InvariantViolation, NoReferenceError
from offsetlag.stream_model import BufferMessage, Number, as_fraction, playable_video

DEFAULT_ALPHA = 0.34
DEFAULT_PLAYABLE_THRESHOLD = 0.36
DEFAULT_WAIT_TIMEOUT = 5.0


def round_half_up(x: Number) -> int:
    """Nearest integer, halves rounded towards +inf (exact for Fractions)."""
    return math.floor(as_fraction(x) + Fraction(1, 2))


@dataclass(frozen=True)
class GoodPeerPolicy:
    """Reject a first peer whose playable video is below ``threshold * lag``."""

    playable_fraction_threshold: float = DEFAULT_PLAYABLE_THRESHOLD
    wait_timeout: float = DEFAULT_WAIT_TIMEOUT

    def __post_init__(self):
        if not 0.0 <= self.playable_fraction_threshold <= 1.0:
            raise DomainError("good-peer threshold must lie in [0, 1]")
        if self.wait_timeout <= 0:
            raise DomainError("good-peer timeout must be positive")

    def accepts(self, bm: BufferMessage, lag: Number) -> bool:
        return playable_video(bm) >= as_fraction(self.playable_fraction_threshold) * as_fraction(lag)


@dataclass(frozen=True)
class FixedPadding:
    padding: int

    def __post_init__(self):
        if self.padding < 0 or int(self.padding) != self.padding:
            raise DomainError(f"padding must be a non-negative integer, got {self.padding}")


def _check_alpha(alpha) -> None:
    if not 0 < alpha < 1:
        raise DomainError(f"placement coefficient must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class PPLag:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        _check_alpha(self.alpha)


@dataclass(frozen=True)
class PPWidth:
    alpha: float = DEFAULT_ALPHA
    good_peer: Optional[GoodPeerPolicy] = None

    def __post_init__(self):
        _check_alpha(self.alpha)


PlacementScheme = Union[FixedPadding, PPLag, PPWidth]


@dataclass(frozen=True)
class PlacementDecision:
    initial_offset: int
    reference_peer: int
    decided_at: float
    scheme: Optional[PlacementScheme] = None
    was_good_peer: bool = False
    reference: Optional[BufferMessage] = None

    @property
    def theta(self) -> int:
        return self.initial_offset


def _require(bm: BufferMessage) -> None:
    if bm is None or bm.empty:
        raise NoReferenceError("placement needs a non-empty reference buffer message")


def place_fixed_padding(bm: BufferMessage, d: int, scheme: Optional[PlacementScheme] = None) -> PlacementDecision:
    """Start point = reference offset + constant padding ``d``."""
    _require(bm)
    if d < 0:
        raise DomainError("padding must be non-negative")
    return PlacementDecision(bm.offset + int(d), bm.sender, bm.sent_at, scheme or FixedPadding(int(d)), reference=bm)


def place_pp_lag(bm: BufferMessage, s_at_t0: int, alpha: Number, scheme: Optional[PlacementScheme] = None) -> PlacementDecision:
    """Advance the reference offset by ``alpha`` times the reference's offset lag."""
    _require(bm)
    lag = s_at_t0 - bm.offset
    if lag < 0:
        raise InvariantViolation(f"reference offset {bm.offset} ahead of s(t0)={s_at_t0}")
    theta = bm.offset + round_half_up(as_fraction(alpha) * lag)
    return PlacementDecision(theta, bm.sender, bm.sent_at, scheme or PPLag(float(alpha)), reference=bm)


def place_pp_width(bm: BufferMessage, alpha: Number, scheme: Optional[PlacementScheme] = None,
                   was_good_peer: bool = False) -> PlacementDecision:
    """Advance the reference offset by ``alpha`` times the reference's buffer width.

    The result always lies inside ``[offset, scope]`` of the reference.
    """
    _require(bm)
    theta = bm.offset + round_half_up(as_fraction(alpha) * int(bm.width))
    return PlacementDecision(theta, bm.sender, bm.sent_at, scheme or PPWidth(float(alpha)),
                             was_good_peer=was_good_peer, reference=bm)


class PeerResponse(NamedTuple):
    """A buffer message as received by the host, with the sender's lag at arrival."""

    bm: BufferMessage
    lag: int
    arrived_at: float


def select_good_peer(responses: Iterable[PeerResponse], policy: GoodPeerPolicy, alpha: Number,
                     timer_started_at: Optional[float] = None,
                     scheme: Optional[PlacementScheme] = None) -> PlacementDecision:
    """Good-peer selection over a time-ordered stream of responses.

    The first response fixes a provisional start point. If it fails the
    playable-video test, later responses arriving before the timer expires
    are examined in order; the first one that passes replaces the start
    point. Otherwise the provisional placement stands.
    """
    it = iter(responses)
    first = next(it, None)
    if first is None:
        raise NoReferenceError("no peer responded")
    start = first.arrived_at if timer_started_at is None else timer_started_at
    deadline = start + policy.wait_timeout
    scheme = scheme or PPWidth(float(alpha), policy)

    provisional = place_pp_width(first.bm, alpha, scheme)
    if policy.accepts(first.bm, first.lag):
        return PlacementDecision(provisional.theta, first.bm.sender, first.arrived_at, scheme, True, first.bm)

    for resp in it:
        if resp.arrived_at >= deadline:
            break
        if resp.bm.empty:
            continue
        if policy.accepts(resp.bm, resp.lag):
            d = place_pp_width(resp.bm, alpha, scheme, was_good_peer=True)
            return PlacementDecision(d.theta, resp.bm.sender, resp.arrived_at, scheme, True, resp.bm)
    return PlacementDecision(provisional.theta, first.bm.sender, first.arrived_at, scheme, False, first.bm)


def place(scheme: PlacementScheme, bm: BufferMessage, s_at_t0: int) -> PlacementDecision:
    """Dispatch a single-reference placement (no good-peer filtering)."""
    if isinstance(scheme, FixedPadding):
        return place_fixed_padding(bm, scheme.padding, scheme)
    if isinstance(scheme, PPLag):
        return place_pp_lag(bm, s_at_t0, scheme.alpha, scheme)
    if isinstance(scheme, PPWidth):
        return place_pp_width(bm, scheme.alpha, scheme)
    raise TypeError(f"unknown placement scheme {scheme!r}")

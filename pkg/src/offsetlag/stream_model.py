"""CBR stream, tracker window and peer buffer state.

Chunk IDs are plain non-negative ints. Time is seconds, accepted as int,
float or Fraction; the service curve is evaluated exactly with Fractions
so that ``s(t)`` never suffers float drift.
"""

from __future__ import annotations

import base64
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Optional, Union

from offsetlag.errors import (
    DomainError,
    InvariantViolation,
    UndefinedRatioError,
    UnplacedPeerError,
)

Number = Union[int, float, Fraction]

#: Default simulation tick (seconds); chunk requests happen on a 1/4 s grid.
TICK = Fraction(1, 4)


def as_fraction(x: Number) -> Fraction:
    """Exact rational for ``x``.

    Floats go through ``str`` so that ``0.34`` becomes ``17/50`` rather than
    the binary expansion of the nearest double.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise DomainError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    return Fraction(str(x))


@dataclass(frozen=True)
class StreamConfig:
    """A CBR stream with service curve ``s(t) = floor(r*t)``, ``s(0) = 0``."""

    playback_rate: Fraction = Fraction(10)

    def __post_init__(self):
        r = as_fraction(self.playback_rate)
        if r <= 0:
            raise DomainError(f"playback rate must be positive, got {r}")
        object.__setattr__(self, "playback_rate", r)

    @property
    def r(self) -> Fraction:
        return self.playback_rate


def service_curve(cfg: StreamConfig, t: Number) -> int:
    """Largest chunk ID injected by time ``t``."""
    t = Fraction(t)
    if t < 0:
        raise DomainError(f"service curve undefined for t={t} < 0")
    return math.floor(cfg.playback_rate * t)


@dataclass(frozen=True)
class TrackerState:
    """Tracker holding the newest ``window_width`` chunks of the channel."""

    window_width: int = 1200

    def __post_init__(self):
        if int(self.window_width) != self.window_width or self.window_width < 1:
            raise DomainError(f"tracker window must be an integer >= 1, got {self.window_width}")

    def offset(self, cfg: StreamConfig, t: Number) -> int:
        """Tracker offset curve ``f_tk(t) = s(t) - W_tk`` (floored at chunk 0)."""
        return max(0, service_curve(cfg, t) - self.window_width)

    def buffer_message(self, cfg: StreamConfig, t: Number) -> "BufferMessage":
        """The tracker's bootstrap buffer message: its window, fully held."""
        s = service_curve(cfg, t)
        f = self.offset(cfg, t)
        return BufferMessage(sender=TRACKER_ID, sent_at=float(t), offset=f, bitmap="1" * (s - f + 1))


#: Peer id used for the tracker wherever a reference peer is recorded.
TRACKER_ID = 0


# ---------------------------------------------------------------------------
# Buffer messages


_BITS = re.compile(r"^[01]*$")
_RUNS = re.compile(r"1+|0+")


@dataclass(frozen=True)
class BufferMessage:
    """Offset plus occupancy bitmap; bit ``i`` covers chunk ``offset + i``.

    ``offset is None`` marks an empty buffer (a peer still in its silent
    stage, or one whose start point the stream has not reached yet).
    """

    sender: int
    sent_at: float
    offset: Optional[int]
    bitmap: str = ""

    def __post_init__(self):
        if not _BITS.match(self.bitmap):
            raise DomainError("bitmap must be a string of '0'/'1'")
        if self.offset is None:
            if self.bitmap:
                raise InvariantViolation("empty buffer message carries a bitmap")
            return
        if self.offset < 0:
            raise DomainError(f"negative chunk ID {self.offset}")
        if not self.bitmap or self.bitmap[0] != "1":
            raise InvariantViolation("bit 0 (the offset chunk) must be set")
        if self.bitmap[-1] != "1":
            raise InvariantViolation("last bit (the scope chunk) must be set")

    @property
    def empty(self) -> bool:
        return self.offset is None

    @property
    def scope(self) -> Optional[int]:
        """Largest chunk ID held."""
        if self.offset is None:
            return None
        return self.offset + len(self.bitmap) - 1

    @property
    def width(self) -> "Width":
        return buffer_width(self)

    def to_dict(self) -> dict:
        return {
            "peer": self.sender,
            "t": self.sent_at,
            "offset": self.offset,
            "bitmap": encode_bitmap(self.bitmap),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BufferMessage":
        bits = decode_bitmap(d.get("bitmap") or "")
        return cls(sender=d["peer"], sent_at=d["t"], offset=d.get("offset"), bitmap=bits)


def encode_bitmap(bits: str) -> str:
    """Run-length form ``rle:<n1>,<n0>,<n1>,...``; runs alternate starting with ones."""
    if not bits:
        return ""
    runs = [len(m.group()) for m in _RUNS.finditer(bits)]
    if bits[0] == "0":
        runs.insert(0, 0)
    return "rle:" + ",".join(map(str, runs))


def decode_bitmap(text: str) -> str:
    """Inverse of :func:`encode_bitmap`; also accepts ``b64:<nbits>:<data>``."""
    if not text:
        return ""
    if text.startswith("rle:"):
        body = text[4:]
        if not body:
            return ""
        try:
            runs = [int(x) for x in body.split(",")]
        except ValueError as exc:
            raise DomainError(f"bad run-length bitmap {text!r}") from exc
        if any(n < 0 for n in runs):
            raise DomainError(f"negative run in {text!r}")
        return "".join(("1" if i % 2 == 0 else "0") * n for i, n in enumerate(runs))
    if text.startswith("b64:"):
        try:
            _, nbits, data = text.split(":", 2)
            n = int(nbits)
            raw = base64.b64decode(data, validate=True)
        except ValueError as exc:
            raise DomainError(f"bad base64 bitmap {text!r}") from exc
        bits = "".join(f"{byte:08b}" for byte in raw)
        if n > len(bits):
            raise DomainError(f"bitmap declares {n} bits, carries {len(bits)}")
        return bits[:n]
    if _BITS.match(text):
        return text
    raise DomainError(f"unrecognised bitmap encoding {text[:16]!r}")


def encode_bitmap_b64(bits: str) -> str:
    pad = (-len(bits)) % 8
    padded = bits + "0" * pad
    raw = bytes(int(padded[i:i + 8], 2) for i in range(0, len(padded), 8))
    return f"b64:{len(bits)}:{base64.b64encode(raw).decode('ascii')}"


# ---------------------------------------------------------------------------
# Peer state


class Width(int):
    """Buffer width in chunks; ``empty`` distinguishes no-buffer from one chunk."""

    empty: bool

    def __new__(cls, value: int, empty: bool = False):
        obj = super().__new__(cls, value)
        obj.empty = empty
        return obj

    def __repr__(self):
        return "Width(empty)" if self.empty else f"Width({int(self)})"


@dataclass
class PeerState:
    """Snapshot of one peer's buffer at some instant."""

    peer_id: int
    offset: Optional[int] = None
    scope: Optional[int] = None
    bitmap: str = ""
    join_time: float = 0.0
    setup_time: Optional[float] = None
    drain_started: bool = False

    def __post_init__(self):
        if self.offset is None:
            return
        if self.scope is None:
            self.scope = self.offset + max(len(self.bitmap), 1) - 1
        if self.scope < self.offset:
            raise InvariantViolation(f"scope {self.scope} < offset {self.offset}")
        if self.bitmap and (len(self.bitmap) != self.scope - self.offset + 1 or self.bitmap[0] != "1"):
            raise InvariantViolation("bitmap inconsistent with offset/scope")

    @property
    def placed(self) -> bool:
        return self.offset is not None

    def buffer_message(self, sent_at: float) -> BufferMessage:
        if self.offset is None:
            return BufferMessage(self.peer_id, sent_at, None, "")
        w = self.scope - self.offset
        bits = self.bitmap or ("1" + "0" * (w - 1) + "1" if w else "1")
        return BufferMessage(self.peer_id, sent_at, self.offset, bits)


def offset_lag(p: PeerState, cfg: StreamConfig, t: Number) -> int:
    """``s(t) - f_p(t)``: how far the peer's buffer head trails the source."""
    if p.offset is None:
        raise UnplacedPeerError(f"peer {p.peer_id} has not placed an offset")
    lag = service_curve(cfg, t) - p.offset
    if lag < 0:
        raise InvariantViolation(f"peer {p.peer_id} offset {p.offset} ahead of s(t)")
    return lag


def buffer_width(p: Union[PeerState, BufferMessage]) -> Width:
    """``scope - offset``; an empty buffer gives ``Width(0, empty=True)``."""
    if p.offset is None:
        return Width(0, empty=True)
    return Width(p.scope - p.offset)


def scope_factor(p: PeerState, cfg: StreamConfig, t: Number) -> float:
    """Width over lag; always in [0, 1] for a consistent snapshot."""
    lag = offset_lag(p, cfg, t)
    if lag == 0:
        raise UndefinedRatioError(f"peer {p.peer_id} has zero offset lag")
    beta = buffer_width(p) / lag
    if not 0.0 <= beta <= 1.0:
        raise InvariantViolation(f"scope factor {beta} outside [0, 1]; scope beyond s(t)?")
    return beta


def playable_video(bm: BufferMessage) -> int:
    """Length of the all-ones prefix of the bitmap."""
    i = bm.bitmap.find("0")
    return len(bm.bitmap) if i < 0 else i


def buffer_occupation(bm: BufferMessage) -> int:
    """Number of chunks held (ones in the bitmap)."""
    return bm.bitmap.count("1")


# ---------------------------------------------------------------------------
# Startup event timeline


@dataclass(frozen=True)
class EventTimeline:
    """Startup events of one host, seconds after tracker registration."""

    tracker_response: float
    peer_response: float
    chunk_request: float
    advertising: float
    offset_initial: float

    def __post_init__(self):
        if not 0 <= self.tracker_response <= self.peer_response <= self.chunk_request:
            raise InvariantViolation("need 0 <= T_tk <= T_p <= T_chk")
        if self.offset_initial < self.peer_response:
            raise InvariantViolation("offset initial time precedes peer response")

    @property
    def setup_time(self) -> float:
        """Offset setup time: drain start minus first peer response."""
        return self.offset_initial - self.peer_response

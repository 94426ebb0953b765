"""Estimators over buffer-message traces.

Works on the JSONL traces the simulator writes, and on external traces
that carry bare ``{"peer", "t", "offset", "bitmap"}`` records.
"""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, TextIO

import numpy as np

from offsetlag.errors import DomainError, SchemaVersionError, TraceFormatError
from offsetlag.stream_model import BufferMessage, decode_bitmap

SCHEMA_VERSION = 1
TRACKER_BUFFER_SECONDS = 120

# ---------------------------------------------------------------------------
# Reading traces


def read_trace(fh: TextIO) -> list[dict]:
    """Parse a JSONL trace; raises TraceFormatError naming the bad line."""
    events = []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            ev = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"invalid JSON ({exc.msg})", lineno) from exc
        if not isinstance(ev, dict):
            raise TraceFormatError("record is not an object", lineno)
        if ev.get("kind") == "header" or "schema" in ev:
            if ev.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
                raise SchemaVersionError(f"trace schema {ev.get('schema')!r}, expected {SCHEMA_VERSION}")
        elif "peer" not in ev or "t" not in ev:
            raise TraceFormatError("record lacks 'peer' or 't'", lineno)
        ev["_line"] = lineno
        events.append(ev)
    if not events:
        raise TraceFormatError("trace is empty", 1)
    return events


@dataclass(frozen=True)
class TraceRecord:
    peer: int
    timestamp: float
    offset: int
    bitmap: Optional[str] = None
    scope: Optional[int] = None
    occupation: Optional[int] = None

    @property
    def buffer_occupation(self) -> Optional[int]:
        if self.bitmap is not None:
            return self.bitmap.count("1")
        return self.occupation


def advertisement_records(events: Iterable[dict]) -> dict[int, list[TraceRecord]]:
    """Per-peer, time-ordered buffer advertisements (kind ``bm_advertise`` or kind-less)."""
    per_peer: dict[int, list[TraceRecord]] = defaultdict(list)
    for ev in events:
        kind = ev.get("kind", "bm_advertise")
        if kind != "bm_advertise" or ev.get("offset") is None:
            continue
        try:
            bits = decode_bitmap(ev["bitmap"]) if ev.get("bitmap") else None
        except DomainError as exc:
            raise TraceFormatError(str(exc), ev.get("_line")) from exc
        scope = ev.get("scope")
        if scope is None and bits:
            scope = ev["offset"] + len(bits) - 1
        per_peer[ev["peer"]].append(
            TraceRecord(ev["peer"], float(ev["t"]), int(ev["offset"]), bits, scope, ev.get("occupation")))
    for recs in per_peer.values():
        recs.sort(key=lambda r: r.timestamp)
    return dict(per_peer)


def header_of(events: Sequence[dict]) -> Optional[dict]:
    for ev in events:
        if ev.get("kind") == "header":
            return ev
    return None


def infer_rate(events: Sequence[dict]) -> Optional[float]:
    """Playback rate from the first tracker report (window / 120 s), else the header."""
    for ev in events:
        if ev.get("kind") == "tracker_response" and ev.get("tracker_width"):
            return tracker_rate(ev["tracker_width"])
    head = header_of(events)
    if head and head.get("rate"):
        from fractions import Fraction

        return float(Fraction(str(head["rate"])))
    return None


# ---------------------------------------------------------------------------
# Offset setup time


def estimate_change_time_aa(t1: float, t2: float) -> float:
    """Midpoint of the first pair of reports with differing offsets."""
    if not t1 < t2:
        raise DomainError(f"need t1 < t2, got {t1}, {t2}")
    return (t1 + t2) / 2


def estimate_change_time_li(t1: float, t2: float, f1: int, f2: int, r: float) -> float:
    """Back off from ``t2`` by the offset advance at playback rate."""
    if r <= 0:
        raise DomainError("rate must be positive")
    if not f2 > f1:
        raise DomainError(f"need f2 > f1, got {f1}, {f2}")
    if not t1 < t2:
        raise DomainError(f"need t1 < t2, got {t1}, {t2}")
    return t2 - (f2 - f1) / r


class SetupStatus(str, enum.Enum):
    OK = "ok"
    SKIPPED = "skipped"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class SetupEstimate:
    peer: int
    status: SetupStatus
    first_seen: float
    initial_occupation: Optional[int]
    change_time: Optional[float] = None

    @property
    def raw(self) -> Optional[float]:
        """Drain start minus the first report: only part of the true setup time."""
        if self.change_time is None:
            return None
        return self.change_time - self.first_seen


def estimate_offset_setup_time(records: Sequence[TraceRecord], occupation_threshold: int, method: str,
                               r: Optional[float] = None) -> SetupEstimate:
    """Estimate when a fresh host started draining.

    Hosts whose first report already holds ``occupation_threshold`` chunks
    or more are skipped as not fresh. The earliest consecutive pair with
    differing offsets brackets the change.
    """
    if len(records) < 2:
        raise DomainError("need at least two records for a peer")
    method = method.lower()
    if method not in ("aa", "li"):
        raise DomainError(f"unknown method {method!r}")
    if method == "li" and (r is None or r <= 0):
        raise DomainError("linear interpolation needs a positive rate")
    first = records[0]
    occ = first.buffer_occupation
    if occ is not None and occ >= occupation_threshold:
        return SetupEstimate(first.peer, SetupStatus.SKIPPED, first.timestamp, occ)
    for a, b in zip(records, records[1:]):
        if a.offset != b.offset:
            if method == "aa":
                t = estimate_change_time_aa(a.timestamp, b.timestamp)
            else:
                t = estimate_change_time_li(a.timestamp, b.timestamp, a.offset, b.offset, r)
            return SetupEstimate(first.peer, SetupStatus.OK, first.timestamp, occ, t)
    return SetupEstimate(first.peer, SetupStatus.INDETERMINATE, first.timestamp, occ)


# ---------------------------------------------------------------------------
# Placement coefficients


@dataclass(frozen=True)
class Coefficients:
    alpha_w: Optional[float]
    alpha_l: Optional[float]


def infer_placement_coefficients(theta: int, f_p: int, scope_p: int, s_at_response: int) -> Coefficients:
    """Proportional advance of ``theta`` over the reference offset, relative to width and to lag.

    A zero width or lag yields None for that coefficient.
    """
    adv = theta - f_p
    w = scope_p - f_p
    lag = s_at_response - f_p
    return Coefficients(adv / w if w > 0 else None, adv / lag if lag > 0 else None)


def tracker_rate(window_width: float) -> float:
    """Playback rate implied by a tracker buffering two minutes of content."""
    if window_width <= 0:
        raise DomainError("tracker window must be positive")
    return window_width / TRACKER_BUFFER_SECONDS


def distribution_mode(values: Sequence[float], bin_width: float = 0.01) -> float:
    """Mode of a sample: median of the values in the fullest histogram bin."""
    x = np.asarray([v for v in values if v is not None], dtype=float)
    if x.size == 0:
        return math.nan
    bins = np.floor(x / bin_width).astype(np.int64)
    uniq, counts = np.unique(bins, return_counts=True)
    best = uniq[np.argmax(counts)]
    return float(np.median(x[bins == best]))


# ---------------------------------------------------------------------------
# Chunk availability


class AvailabilityMode(str, enum.Enum):
    PLAYABLE = "v"
    SCOPE = "scope"


@dataclass(frozen=True)
class Snapshot:
    offset: int
    playable: int
    scope: int

    @classmethod
    def from_message(cls, bm: BufferMessage) -> "Snapshot":
        from offsetlag.stream_model import playable_video

        return cls(bm.offset, playable_video(bm), bm.scope)

    def interval(self, mode: AvailabilityMode) -> tuple[int, int]:
        """Half-open chunk range this peer counts towards."""
        if mode == AvailabilityMode.PLAYABLE:
            return self.offset, self.offset + self.playable
        return self.offset, self.scope + 1


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # exclusive
    availability: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class AvailabilitySegments:
    front_point: int
    low_most_point: int
    up_most_point: int
    end_point: int
    mode: AvailabilityMode
    most_availability: int = 0
    segments: tuple = ()

    @property
    def fp(self):
        return self.front_point

    @property
    def lmp(self):
        return self.low_most_point

    @property
    def ump(self):
        return self.up_most_point

    @property
    def ep(self):
        return self.end_point


def availability_profile(snapshots: Sequence[Snapshot], mode: AvailabilityMode) -> list[Segment]:
    """Maximal constant-availability segments over ``[min offset, max end)``."""
    if not snapshots:
        raise DomainError("need at least one snapshot")
    mode = AvailabilityMode(mode)
    delta: dict[int, int] = defaultdict(int)
    for snap in snapshots:
        lo, hi = snap.interval(mode)
        if hi > lo:
            delta[lo] += 1
            delta[hi] -= 1
    lo = min(s.offset for s in snapshots)
    hi = max(s.interval(mode)[1] for s in snapshots)
    if hi <= lo:
        return [Segment(lo, lo + 1, 0)]
    points = sorted(set(delta) | {lo, hi})
    segs: list[Segment] = []
    level = 0
    for a, b in zip(points, points[1:]):
        level += delta.get(a, 0)
        if a < lo or b > hi:
            continue
        if segs and segs[-1].availability == level and segs[-1].end == a:
            segs[-1] = Segment(segs[-1].start, b, level)
        else:
            segs.append(Segment(a, b, level))
    return segs


def availability_segments(snapshots: Sequence[Snapshot], mode: AvailabilityMode) -> AvailabilitySegments:
    """Front / Most / End segmentation of the chunk-availability step function.

    'Most' has the highest availability (ties: longest, then lowest start);
    'Front' and 'End' are its neighbours and collapse onto it when absent.
    """
    mode = AvailabilityMode(mode)
    segs = availability_profile(snapshots, mode)
    i = min(range(len(segs)), key=lambda k: (-segs[k].availability, -segs[k].length, segs[k].start))
    most = segs[i]
    lmp, ump = most.start, most.end - 1
    fp = segs[i - 1].start if i > 0 else lmp
    ep = segs[i + 1].end - 1 if i + 1 < len(segs) else ump
    return AvailabilitySegments(fp, lmp, ump, ep, mode, most.availability, tuple(segs))


class OffsetClass(str, enum.Enum):
    IN_FRONT = "front"
    IN_MOST = "most"
    IN_END = "end"
    OUTSIDE = "outside"


def classify_initial_offset(theta: int, segs: AvailabilitySegments) -> OffsetClass:
    if segs.lmp <= theta <= segs.ump:
        return OffsetClass.IN_MOST
    if segs.fp <= theta < segs.lmp:
        return OffsetClass.IN_FRONT
    if segs.ump < theta <= segs.ep:
        return OffsetClass.IN_END
    return OffsetClass.OUTSIDE


def availability_at(snapshots: Sequence[Snapshot], mode: AvailabilityMode, chunk: int) -> int:
    mode = AvailabilityMode(mode)
    return sum(lo <= chunk < hi for lo, hi in (s.interval(mode) for s in snapshots))


# ---------------------------------------------------------------------------
# Whole-trace analysis


@dataclass
class HostStartup:
    """What a host saw and did during startup, gathered from trace events."""

    peer: int
    responses: list
    placement: Optional[dict] = None
    tracker: Optional[dict] = None
    drain_time: Optional[float] = None


def host_startups(events: Iterable[dict]) -> dict[int, HostStartup]:
    hosts: dict[int, HostStartup] = {}

    def get(pid):
        if pid not in hosts:
            hosts[pid] = HostStartup(pid, [])
        return hosts[pid]

    for ev in events:
        kind = ev.get("kind")
        if kind == "peer_response":
            get(ev["peer"]).responses.append(ev)
        elif kind == "placement":
            get(ev["peer"]).placement = ev
        elif kind == "tracker_response":
            h = get(ev["peer"])
            if h.tracker is None:
                h.tracker = ev
        elif kind == "drain_start":
            get(ev["peer"]).drain_time = float(ev["t"])
    return hosts


def response_snapshot(ev: dict) -> Optional[Snapshot]:
    if ev.get("offset") is None:
        return None
    if ev.get("bitmap"):
        bits = decode_bitmap(ev["bitmap"])
        bm = BufferMessage(ev.get("from", 0), float(ev["t"]), int(ev["offset"]), bits)
        return Snapshot.from_message(bm)
    if "playable" in ev and "scope" in ev:
        return Snapshot(int(ev["offset"]), int(ev["playable"]), int(ev["scope"]))
    return None


def placement_coefficients(host: HostStartup) -> Optional[dict]:
    """Coefficients of a host's start point against its reference and its first responder."""
    pl = host.placement
    if pl is None:
        return None
    theta = int(pl["theta"])
    ref = pl.get("ref")
    s_latest = host.tracker["s"] if host.tracker else pl.get("s_t0")
    ref_ev = next((r for r in host.responses if r.get("from") == ref and r.get("offset") is not None), None)
    if ref_ev is not None:
        ref_f, ref_scope, s_ref = int(ref_ev["offset"]), int(ref_ev["scope"]), int(ref_ev["s"])
    else:
        # bootstrapped from the tracker, or a trace without response records
        ref_f, ref_scope, s_ref = int(pl["ref_offset"]), int(pl["ref_scope"]), int(pl.get("s_t0", s_latest))
    c = infer_placement_coefficients(theta, ref_f, ref_scope, s_ref)
    first = next((r for r in host.responses if r.get("offset") is not None), None)
    cf = infer_placement_coefficients(theta, int(first["offset"]), int(first["scope"]), int(first["s"])) \
        if first is not None else Coefficients(None, None)
    return {
        "peer": host.peer, "ref_peer": ref, "theta": theta, "ref_width": ref_scope - ref_f,
        "alpha_w": c.alpha_w, "alpha_l": c.alpha_l,
        "first_peer": first.get("from") if first else None,
        "first_alpha_w": cf.alpha_w, "first_alpha_l": cf.alpha_l,
        "good_peer": pl.get("good_peer"),
    }


def summarize(values: Sequence[Optional[float]]) -> dict:
    x = np.asarray([v for v in values if v is not None], dtype=float)
    if x.size == 0:
        return {"n": 0, "mean": None, "sd": None}
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return {"n": int(x.size), "mean": float(x.mean()), "sd": sd}


def iter_setup_estimates(events: Sequence[dict], occupation_threshold: int, method: str,
                         r: Optional[float]) -> Iterator[tuple[SetupEstimate, Optional[float]]]:
    """Setup-time estimate per advertising peer, with the full setup time when the trace marks ``t0``."""
    hosts = host_startups(events)
    for pid, recs in sorted(advertisement_records(events).items()):
        if len(recs) < 2:
            continue
        est = estimate_offset_setup_time(recs, occupation_threshold, method, r)
        full = None
        h = hosts.get(pid)
        if est.change_time is not None and h is not None and h.placement is not None:
            full = est.change_time - float(h.placement["t0"])
        yield est, full

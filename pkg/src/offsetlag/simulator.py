"""Seeded discrete-event simulation of hosts joining a CBR swarm.

Each host registers with the tracker, contacts peers from the returned
list, places its initial offset against the chosen reference and starts
draining ``tau`` seconds later. Only the startup phase is modelled: no
chunk transfer, no churn. Advertised buffer widths come from a width
model rather than from a fetching strategy.
"""

from __future__ import annotations

import bisect
import csv
import dataclasses
import heapq
import io
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from offsetlag import __version__
from offsetlag.errors import DomainError, InvariantViolation, TraceCorruptionError
from offsetlag.lag_dynamics import fixed_point_lag
from offsetlag.placement import (
    FixedPadding,
    GoodPeerPolicy,
    PeerResponse,
    PlacementDecision,
    PPLag,
    PPWidth,
    place,
    round_half_up,
    select_good_peer,
)
from offsetlag.stream_model import (
    TRACKER_ID,
    BufferMessage,
    StreamConfig,
    TrackerState,
    as_fraction,
    buffer_occupation,
    encode_bitmap,
    playable_video,
    service_curve,
)

SCHEMA_VERSION = 1

SELECTIONS = ("sequential", "random", "tracker-list")
SCHEMES = ("fp", "pp-lag", "pp-width")
WIDTH_MODELS = ("full", "stationary")
WIDTH_DISTRIBUTIONS = ("uniform", "constant", "exponential")
ARRIVALS = ("constant", "exponential")
TAU_DISTRIBUTIONS = ("constant", "uniform")


class ConfigError(DomainError):
    """A simulation config violates its invariants."""


@dataclass
class SimConfig:
    """Flat simulation config; config-file keys and CLI flags use these names."""

    n_peers: int = 100
    rate: float = 10.0
    tracker_width: int = 1200
    arrival: str = "constant"
    arrival_interval: float = 100.0
    start_time: Optional[float] = None
    selection: str = "sequential"
    list_size: int = 5
    scheme: str = "pp-lag"
    alpha: float = 0.34
    padding: Optional[int] = None
    good_peer: bool = False
    playable_threshold: float = 0.36
    wait_timeout: float = 5.0
    tau: float = 70.0
    tau_distribution: str = "constant"
    tau_spread: float = 0.0
    width_model: str = "full"
    width_mean: Optional[float] = None
    width_distribution: str = "uniform"
    width_spread: float = 0.1
    poor_fraction: float = 0.0
    poor_playable: float = 0.1
    fetch_rate: Optional[float] = None
    report_interval: Optional[float] = 5.0
    advertise_tail: float = 30.0
    offset_jitter: int = 0
    latency_min: float = 0.9
    latency_max: float = 2.0
    tracker_latency: float = 0.058
    seed: int = 0
    duration: Optional[float] = None
    trace_bitmaps: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.n_peers, int) and self.n_peers >= 1, "n_peers must be an integer >= 1")
        need(self.rate > 0, "rate must be positive")
        need(int(self.tracker_width) == self.tracker_width and self.tracker_width >= 1,
             "tracker_width must be an integer >= 1")
        need(self.arrival in ARRIVALS, f"arrival must be one of {ARRIVALS}")
        need(self.arrival_interval > 0, "arrival_interval must be positive")
        need(self.selection in SELECTIONS, f"selection must be one of {SELECTIONS}")
        need(self.list_size >= 1, "list_size must be >= 1")
        need(self.scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
        if self.scheme != "fp":
            need(0 < self.alpha < 1, "alpha must lie in (0, 1)")
        need(self.padding is None or self.padding >= 0, "padding must be non-negative")
        need(not self.good_peer or self.scheme == "pp-width", "good-peer selection requires scheme pp-width")
        need(0 <= self.playable_threshold <= 1, "playable_threshold must lie in [0, 1]")
        need(self.wait_timeout > 0, "wait_timeout must be positive")
        need(self.tau > 0, "tau must be positive")
        need(self.tau_distribution in TAU_DISTRIBUTIONS, f"tau_distribution must be one of {TAU_DISTRIBUTIONS}")
        need(0 <= self.tau_spread < self.tau, "tau_spread must lie in [0, tau)")
        need(self.width_model in WIDTH_MODELS, f"width_model must be one of {WIDTH_MODELS}")
        need(self.width_distribution in WIDTH_DISTRIBUTIONS,
             f"width_distribution must be one of {WIDTH_DISTRIBUTIONS}")
        if self.width_model == "stationary":
            need(self.width_mean is not None and self.width_mean >= 0, "stationary widths need width_mean >= 0")
        need(0 <= self.width_spread <= 1, "width_spread must lie in [0, 1]")
        need(0 <= self.poor_fraction <= 1, "poor_fraction must lie in [0, 1]")
        need(0 <= self.poor_playable <= 1, "poor_playable must lie in [0, 1]")
        need(self.fetch_rate is None or self.fetch_rate > 0, "fetch_rate must be positive")
        need(self.report_interval is None or self.report_interval >= 0, "report_interval must be >= 0")
        need(self.advertise_tail >= 0, "advertise_tail must be >= 0")
        need(self.offset_jitter >= 0, "offset_jitter must be >= 0")
        if self.offset_jitter and self.report_interval:
            need(2 * self.offset_jitter < self.rate * self.report_interval,
                 "offset_jitter must stay below half the offset advance per report")
        need(0 <= self.latency_min <= self.latency_max, "need 0 <= latency_min <= latency_max")
        need(self.tracker_latency >= 0, "tracker_latency must be >= 0")
        need(self.duration is None or self.duration > 0, "duration must be positive")

    # derived objects -----------------------------------------------------

    @property
    def stream(self) -> StreamConfig:
        return StreamConfig(as_fraction(self.rate))

    @property
    def tracker(self) -> TrackerState:
        return TrackerState(int(self.tracker_width))

    @property
    def placement_scheme(self):
        if self.scheme == "fp":
            pad = self.padding if self.padding is not None else round_half_up(as_fraction(self.rate) * as_fraction(self.tau))
            return FixedPadding(int(pad))
        if self.scheme == "pp-lag":
            return PPLag(self.alpha)
        policy = GoodPeerPolicy(self.playable_threshold, self.wait_timeout) if self.good_peer else None
        return PPWidth(self.alpha, policy)

    @property
    def stable_lag(self) -> Optional[float]:
        """``r*tau/alpha`` for the proportional schemes, None for fixed padding."""
        if self.scheme == "fp":
            return None
        return fixed_point_lag(self.alpha, float(self.rate), self.tau)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# First-peer selection


def select_first_peer(policy: str, online: Sequence[int], rng: random.Random, list_size: int = 5) -> Optional[int]:
    """Pick the reference a host would hear from first; None means bootstrap from the tracker."""
    if not online:
        return None
    if policy == "sequential":
        return online[-1]
    if policy == "random":
        return online[rng.randrange(len(online))]
    if policy == "tracker-list":
        subset = rng.sample(range(len(online)), min(list_size, len(online)))
        return online[subset[rng.randrange(len(subset))]]
    raise ConfigError(f"unknown selection policy {policy!r}")


def peer_list(policy: str, online: Sequence[int], rng: random.Random, list_size: int = 5) -> list[int]:
    """Peers a host contacts after its tracker response."""
    if not online:
        return []
    if policy == "tracker-list":
        return [online[i] for i in rng.sample(range(len(online)), min(list_size, len(online)))]
    return [select_first_peer(policy, online, rng, list_size)]


# ---------------------------------------------------------------------------
# Trace containers


@dataclass
class PeerSummary:
    peer: int
    join_time: float
    theta: int
    lag: int
    ref_peer: int
    chain_len: int
    t0: float
    decided_at: float
    tau: float
    drain_at: float
    width_at_place: int
    ref_offset: int
    ref_lag: int
    s_at_t0: int
    s_at_drain: int
    good_peer: bool
    ref_playable: int


@dataclass
class SimTrace:
    config: SimConfig
    events: list[dict]
    peers: list[PeerSummary]

    def peer_map(self) -> dict[int, PeerSummary]:
        return {p.peer: p for p in self.peers}

    def lags(self) -> np.ndarray:
        """Final lags indexed by join order (1-based peer ids)."""
        return np.array([p.lag for p in sorted(self.peers, key=lambda p: p.peer)], dtype=float)

    def header(self) -> dict:
        cfg = self.config
        return {
            "t": 0.0, "kind": "header", "peer": TRACKER_ID, "schema": SCHEMA_VERSION,
            "version": __version__, "rate": str(as_fraction(cfg.rate)), "tracker_width": cfg.tracker_width,
            "scheme": cfg.scheme, "alpha": cfg.alpha, "tau": cfg.tau, "seed": cfg.seed,
        }

    def write_jsonl(self, fh: io.TextIOBase) -> None:
        dump = json.JSONEncoder(sort_keys=True, separators=(",", ":")).encode
        fh.write(dump(self.header()) + "\n")
        for ev in self.events:
            fh.write(dump(ev) + "\n")

    def write_summary_csv(self, fh: io.TextIOBase) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["join_index", "theta", "lag", "width_at_place", "chain_len", "ref_peer", "good_peer_flag"])
        for p in sorted(self.peers, key=lambda p: p.peer):
            w.writerow([p.peer, p.theta, p.lag, p.width_at_place, p.chain_len, p.ref_peer, int(p.good_peer)])


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class _Host:
    pid: int
    join: float
    poor: bool
    tau: Fraction
    contact_at: float = 0.0
    expected: int = 0
    received: int = 0
    responses: list = field(default_factory=list)
    decision: Optional[PlacementDecision] = None
    decided_at: float = 0.0
    theta: int = 0
    t0: float = 0.0
    drain_nominal: Fraction = Fraction(0)
    s_nominal: int = 0
    drain_at: Fraction = Fraction(0)
    last_adv_offset: int = 0


class _Sim:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.stream = cfg.stream
        self.r = self.stream.r
        self.tracker = cfg.tracker
        self.scheme = cfg.placement_scheme
        self.fetch_rate = float(cfg.fetch_rate if cfg.fetch_rate is not None else 3 * cfg.rate)
        seed = cfg.seed
        self.rng_arrival = random.Random(f"{seed}:arrival")
        self.rng_latency = random.Random(f"{seed}:latency")
        self.rng_select = random.Random(f"{seed}:select")
        self.rng_width = random.Random(f"{seed}:width")
        self.rng_tau = random.Random(f"{seed}:tau")
        self.rng_misc = random.Random(f"{seed}:misc")
        self.heap: list = []
        self.seq = 0
        self.events: list[dict] = []
        self.hosts: dict[int, _Host] = {}
        self.online: list[int] = []
        self.summaries: list[PeerSummary] = []
        self.chain_len: dict[int, int] = {TRACKER_ID: 0}

    # helpers -------------------------------------------------------------

    def s(self, t) -> int:
        return service_curve(self.stream, t)

    def push(self, t: float, kind: str, pid: int, arg=None) -> None:
        if self.cfg.duration is not None and t > self.cfg.duration:
            return
        heapq.heappush(self.heap, (t, self.seq, kind, pid, arg))
        self.seq += 1

    def emit(self, t: float, kind: str, pid: int, **payload) -> None:
        ev = {"t": t, "kind": kind, "peer": pid}
        ev.update(payload)
        self.events.append(ev)

    def offset_of(self, h: _Host, t: float) -> int:
        if Fraction(t) < h.drain_nominal:
            return h.theta
        return h.theta + self.s(t) - h.s_nominal

    def sample_width(self, lag: int) -> int:
        cfg = self.cfg
        if cfg.width_model == "full":
            return lag
        mean = cfg.width_mean
        if cfg.width_distribution == "constant":
            w = mean
        elif cfg.width_distribution == "uniform":
            w = mean * (1.0 + cfg.width_spread * self.rng_width.uniform(-1.0, 1.0))
        else:
            w = self.rng_width.expovariate(1.0 / mean) if mean > 0 else 0.0
        return min(max(round_half_up(w), 0), lag)

    def buffer_message(self, h: _Host, t: float) -> BufferMessage:
        """What host ``h`` advertises at time ``t``."""
        s = self.s(t)
        if s < h.theta:
            return BufferMessage(h.pid, t, None, "")
        f = self.offset_of(h, t)
        lag = s - f
        w = self.sample_width(lag)
        fetched = 1 + math.floor(self.fetch_rate * max(t - h.t0, 0.0)) - (f - h.theta)
        v = max(1, min(fetched, w + 1))
        if h.poor:
            v = min(v, max(1, math.floor(self.cfg.poor_playable * (w + 1))))
        bits = "1" * (w + 1) if v >= w else "1" * v + "0" * (w - v) + "1"
        return BufferMessage(h.pid, t, f, bits)

    def draw_tau(self) -> Fraction:
        cfg = self.cfg
        if cfg.tau_distribution == "constant" or cfg.tau_spread == 0:
            return as_fraction(cfg.tau)
        return Fraction(cfg.tau + self.rng_tau.uniform(-cfg.tau_spread, cfg.tau_spread))

    # event handlers ------------------------------------------------------

    def on_join(self, t: float, pid: int) -> None:
        h = _Host(pid, t, self.rng_misc.random() < self.cfg.poor_fraction, self.draw_tau())
        self.hosts[pid] = h
        self.emit(t, "join", pid, poor=h.poor)
        self.push(t + self.rng_latency.expovariate(1.0 / self.cfg.tracker_latency)
                  if self.cfg.tracker_latency > 0 else t, "tracker_response", pid)

    def on_tracker_response(self, t: float, pid: int) -> None:
        h = self.hosts[pid]
        s = self.s(t)
        contacts = peer_list(self.cfg.selection, self.online, self.rng_select, self.cfg.list_size)
        self.emit(t, "tracker_response", pid, s=s, tracker_offset=self.tracker.offset(self.stream, t),
                  tracker_width=self.tracker.window_width, contacts=contacts)
        h.contact_at = t
        if not contacts:
            self.bootstrap(t, h)
            return
        h.expected = len(contacts)
        for q in contacts:
            self.push(t + self.rng_latency.uniform(self.cfg.latency_min, self.cfg.latency_max), "peer_response", pid, q)
        if isinstance(self.scheme, PPWidth) and self.scheme.good_peer is not None:
            self.push(t + self.scheme.good_peer.wait_timeout, "timeout", pid)

    def on_peer_response(self, t: float, pid: int, sender: int) -> None:
        h = self.hosts[pid]
        bm = self.buffer_message(self.hosts[sender], t)
        s = self.s(t)
        payload = {"from": sender, "s": s, "offset": bm.offset}
        if not bm.empty:
            payload.update(scope=bm.scope, width=int(bm.width), lag=s - bm.offset,
                           playable=playable_video(bm), occupation=buffer_occupation(bm))
            if self.cfg.trace_bitmaps:
                payload["bitmap"] = encode_bitmap(bm.bitmap)
        self.emit(t, "peer_response", pid, **payload)
        h.received += 1
        if h.decision is not None:
            return
        if not bm.empty:
            h.responses.append(PeerResponse(bm, s - bm.offset, t))
        policy = self.scheme.good_peer if isinstance(self.scheme, PPWidth) else None
        if policy is None:
            if not bm.empty:
                self.decide(t, h, place(self.scheme, bm, s), s)
            elif h.received == h.expected:
                self.bootstrap(t, h)
            return
        if not h.responses:
            return
        d = select_good_peer(h.responses, policy, self.scheme.alpha, h.contact_at, self.scheme)
        if d.was_good_peer:
            self.decide(t, h, d, self.s(d.decided_at))

    def on_timeout(self, t: float, pid: int) -> None:
        h = self.hosts[pid]
        if h.decision is not None:
            return
        if not h.responses:
            self.bootstrap(t, h)
            return
        d = select_good_peer(h.responses, self.scheme.good_peer, self.scheme.alpha, h.contact_at, self.scheme)
        self.decide(t, h, d, self.s(d.decided_at))

    def bootstrap(self, t: float, h: _Host) -> None:
        bm = self.tracker.buffer_message(self.stream, t)
        s = self.s(t)
        d = place(self.scheme, bm, s)
        if isinstance(self.scheme, PPWidth):
            d = dataclasses.replace(d, was_good_peer=True)
        self.decide(t, h, d, s)

    def decide(self, t: float, h: _Host, d: PlacementDecision, s_t0: int) -> None:
        ref = d.reference
        h.decision = d
        h.decided_at = t
        h.theta = d.theta
        h.t0 = d.decided_at
        nominal = Fraction(h.t0) + h.tau
        if nominal < Fraction(t):
            nominal = Fraction(t)
        h.drain_nominal = nominal
        h.s_nominal = self.s(nominal)
        h.drain_at = Fraction(h.s_nominal + 1) / self.r
        lag = h.s_nominal - h.theta
        if lag < 0:
            raise InvariantViolation(f"peer {h.pid} placed at {h.theta}, ahead of s(drain)={h.s_nominal}")
        ref_lag = s_t0 - ref.offset
        self.chain_len[h.pid] = self.chain_len[d.reference_peer] + 1
        self.emit(t, "placement", h.pid, theta=h.theta, ref=d.reference_peer, t0=h.t0, s_t0=s_t0,
                  ref_offset=ref.offset, ref_scope=ref.scope, ref_width=int(ref.width), ref_lag=ref_lag,
                  good_peer=d.was_good_peer, tau=float(h.tau), scheme=self.cfg.scheme)
        self.summaries.append(PeerSummary(
            peer=h.pid, join_time=h.join, theta=h.theta, lag=lag, ref_peer=d.reference_peer,
            chain_len=self.chain_len[h.pid], t0=h.t0, decided_at=t, tau=float(h.tau),
            drain_at=float(h.drain_at), width_at_place=int(ref.width), ref_offset=ref.offset, ref_lag=ref_lag,
            s_at_t0=s_t0, s_at_drain=h.s_nominal, good_peer=d.was_good_peer, ref_playable=playable_video(ref)))
        if h.theta <= s_t0:
            bisect.insort(self.online, h.pid)
        else:
            # buffer stays empty until the stream reaches theta
            self.push(float(Fraction(h.theta) / self.r), "online", h.pid)
        self.push(float(h.drain_at), "drain_start", h.pid)
        if self.cfg.report_interval:
            h.last_adv_offset = h.theta
            self.push(t + self.rng_misc.uniform(0.0, self.cfg.report_interval), "bm_advertise", h.pid)

    def on_drain(self, t: float, pid: int) -> None:
        h = self.hosts[pid]
        self.emit(t, "drain_start", pid, offset=self.offset_of(h, t), lag=h.s_nominal - h.theta)

    def on_advertise(self, t: float, pid: int) -> None:
        h = self.hosts[pid]
        bm = self.buffer_message(h, t)
        offset = bm.offset
        if self.cfg.offset_jitter and offset is not None and offset > h.theta:
            # report noise: the whole advertised window shifts, never past s(t) or back to theta
            j = self.cfg.offset_jitter
            dj = self.rng_misc.randint(-j, j)
            dj = min(max(dj, h.theta + 1 - offset), self.s(t) - bm.scope)
            bm = BufferMessage(bm.sender, bm.sent_at, offset + dj, bm.bitmap)
            offset = bm.offset
        payload = {"offset": offset}
        if not bm.empty:
            payload.update(scope=bm.scope, occupation=buffer_occupation(bm), playable=playable_video(bm))
            if self.cfg.trace_bitmaps:
                payload["bitmap"] = encode_bitmap(bm.bitmap)
        self.emit(t, "bm_advertise", pid, **payload)
        nxt = t + self.cfg.report_interval
        if nxt <= float(h.drain_at) + self.cfg.advertise_tail:
            self.push(nxt, "bm_advertise", pid)

    # main loop -----------------------------------------------------------

    def run(self) -> SimTrace:
        cfg = self.cfg
        t = cfg.start_time if cfg.start_time is not None else cfg.tracker_width / cfg.rate
        for pid in range(1, cfg.n_peers + 1):
            self.push(t, "join", pid)
            gap = cfg.arrival_interval if cfg.arrival == "constant" else self.rng_arrival.expovariate(1.0 / cfg.arrival_interval)
            t += gap
        handlers = {
            "join": lambda t, p, a: self.on_join(t, p),
            "tracker_response": lambda t, p, a: self.on_tracker_response(t, p),
            "peer_response": self.on_peer_response,
            "timeout": lambda t, p, a: self.on_timeout(t, p),
            "drain_start": lambda t, p, a: self.on_drain(t, p),
            "bm_advertise": lambda t, p, a: self.on_advertise(t, p),
            "online": lambda t, p, a: bisect.insort(self.online, p),
        }
        while self.heap:
            t, _, kind, pid, arg = heapq.heappop(self.heap)
            handlers[kind](t, pid, arg)
        return SimTrace(cfg, self.events, self.summaries)


def run_simulation(cfg: SimConfig) -> SimTrace:
    """Run one seeded simulation; the same config always gives the same trace."""
    cfg.validate()
    return _Sim(cfg).run()


def _run_seed(args):
    cfg, seed = args
    return run_simulation(cfg.replace(seed=seed))


def sweep(cfg: SimConfig, seeds: Iterable[int], workers: int = 1) -> list[SimTrace]:
    """Run ``cfg`` under several seeds; output order follows ``seeds``."""
    seeds = list(seeds)
    if workers <= 1 or len(seeds) <= 1:
        return [_run_seed((cfg, s)) for s in seeds]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seed, [(cfg, s) for s in seeds]))


# ---------------------------------------------------------------------------
# Chain statistics


@dataclass(frozen=True)
class ChainStats:
    peer: int
    length: int
    mean_width: float
    mean_tau: float
    delta_lag: float
    mean_advance: float
    residual: float


def measure_chain_stats(trace: SimTrace) -> list[ChainStats]:
    """Per-peer averages along the selection chain back to the tracker.

    For each peer ``n`` the chain is ``n, I(n), I(I(n)), ...`` down to the
    tracker-bootstrapped root. ``mean_width`` averages the width each chain
    member's reference advertised at placement, ``mean_tau`` the setup
    times, and ``delta_lag`` is ``L_n`` minus the tracker window. The
    balance ``mean_width = (r/alpha)*mean_tau - delta_lag/(alpha*|P|)``
    holds up to integer rounding; ``residual`` reports the gap in chunks
    using the realized advances ``theta - f_ref``.
    """
    cfg = trace.config
    r = float(cfg.rate)
    alpha = cfg.alpha
    w_tk = float(cfg.tracker_width)
    by_id = trace.peer_map()
    sums: dict[int, tuple[int, float, float, float, float]] = {TRACKER_ID: (0, 0.0, 0.0, 0.0, 0.0)}
    out = []
    for p in sorted(trace.peers, key=lambda p: p.decided_at):
        if p.ref_peer not in sums:
            if p.ref_peer in by_id:
                raise TraceCorruptionError(f"peer {p.peer} references {p.ref_peer}, placed later")
            raise TraceCorruptionError(f"peer {p.peer} references unknown peer {p.ref_peer}")
        n, sw, st, sa, sdef = sums[p.ref_peer]
        ref_final = w_tk if p.ref_peer == TRACKER_ID else by_id[p.ref_peer].lag
        # lag the reference showed at t0 minus its eventual lag (non-zero if not yet draining)
        deficit = p.ref_lag - ref_final
        n += 1
        sw += p.width_at_place
        st += (p.s_at_drain - p.s_at_t0) / r
        sa += p.theta - p.ref_offset
        sdef += deficit
        sums[p.peer] = (n, sw, st, sa, sdef)
        delta = p.lag - w_tk
        if p.chain_len != n:
            raise TraceCorruptionError(f"peer {p.peer} chain length {p.chain_len} != walked {n}")
        resid = (sa / n) / alpha - ((r / alpha) * (st / n) - (delta - sdef) / (alpha * n)) if alpha else math.nan
        out.append(ChainStats(p.peer, n, sw / n, st / n, delta, sa / n, resid))
    return sorted(out, key=lambda c: c.peer)


def write_chains_csv(stats: Sequence[ChainStats], fh: io.TextIOBase) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["peer", "chain_len", "mean_width", "mean_tau", "delta_lag", "mean_advance"])
    for c in stats:
        w.writerow([c.peer, c.length, repr(c.mean_width), repr(c.mean_tau), repr(c.delta_lag), repr(c.mean_advance)])


# ---------------------------------------------------------------------------
# Lag summary


@dataclass(frozen=True)
class LagStats:
    lags: np.ndarray
    mean: float
    sd: float
    min: float
    max: float
    stable_lag: Optional[float]
    convergence_index: Optional[int]


def summarize_lags(trace: SimTrace, stable_lag: Optional[float] = None, tol: float = 0.01) -> LagStats:
    """Lag statistics by join index; convergence index is the first within ``tol`` of the stable lag."""
    lags = trace.lags()
    if stable_lag is None:
        stable_lag = trace.config.stable_lag
    conv = None
    if stable_lag:
        hit = np.flatnonzero(np.abs(lags - stable_lag) / stable_lag < tol)
        conv = int(hit[0]) + 1 if hit.size else None
    if lags.size == 0:
        return LagStats(lags, math.nan, math.nan, math.nan, math.nan, stable_lag, conv)
    return LagStats(lags, float(lags.mean()), float(lags.std()), float(lags.min()), float(lags.max()), stable_lag, conv)


def sequential_closed_form(n: int, alpha: float, r: float, tau_s: float, tracker_width: float) -> np.ndarray:
    """``L_k = L* + (1-alpha)^k (W_tk - L*)`` for ``k = 1..n``."""
    ls = fixed_point_lag(alpha, r, tau_s)
    k = np.arange(1, n + 1, dtype=float)
    return ls + (1.0 - alpha) ** k * (tracker_width - ls)

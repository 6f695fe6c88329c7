"""Transport between labs: discovery, subscription, chunk delivery, clock exchange.

LabNode holds all protocol behavior sans I/O: it consumes decoded frames
and emits outgoing frames through an injected send callable. Two shells
drive it: SimHost (netsim virtual time, tests and scenarios) and the
socket-based shell in netshell.py (real deployments and the CLI).
"""

from __future__ import annotations

import statistics
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import wire
from .errors import InsufficientData, Timeout
from .netsim import Simulation
from .streams import Chunk, Inlet, StreamHub, StreamInfo, ValueFormat
from .timebase import (ClockModel, ClockSample, IDENTITY_MODEL, OffsetEstimate,
                       estimate_offset, fit_clock_model)

PING_TIMEOUT = 1.0
DEFAULT_ANNOUNCE_INTERVAL = 1.0


@dataclass(frozen=True)
class LinkMetrics:
    """Measured quality of one inter-lab link; gates the achievable LLL."""

    median_rtt: float
    rtt_jitter: float  # interquartile range
    offset_uncertainty: float
    loss_fraction: float
    dropped_samples: int = 0

    def __post_init__(self) -> None:
        if min(self.median_rtt, self.rtt_jitter, self.offset_uncertainty,
               self.loss_fraction) < 0 or self.loss_fraction > 1:
            raise ValueError("metrics out of range")

    def to_json_dict(self) -> dict:
        return {
            "median_rtt": self.median_rtt,
            "rtt_jitter": self.rtt_jitter,
            "offset_uncertainty": self.offset_uncertainty,
            "loss_fraction": self.loss_fraction,
            "dropped_samples": self.dropped_samples,
        }


def invert_model(model: ClockModel) -> ClockModel:
    """Exact inverse of the affine clock map (maps the peer's clock back to ours)."""
    return ClockModel(
        reference_time=model.reference_time + model.offset_at_reference,
        offset_at_reference=-model.offset_at_reference,
        drift=-model.drift / (1.0 + model.drift),
    )


@dataclass
class _PingRecord:
    t0: float  # local send time
    deadline: float
    estimate: OffsetEstimate | None = None

    @property
    def answered(self) -> bool:
        return self.estimate is not None


@dataclass
class _LinkState:
    """Per-peer clock-sync bookkeeping on the requester side."""

    pings: list[_PingRecord] = field(default_factory=list)
    pending: dict[float, _PingRecord] = field(default_factory=dict)

    @property
    def estimates(self) -> list[OffsetEstimate]:
        return [p.estimate for p in self.pings if p.estimate is not None]


@dataclass(frozen=True)
class _CacheEntry:
    info: StreamInfo
    peer: str | None  # None = local
    last_seen: float


class LabNode:
    """Protocol state machine for one lab node.

    Not thread-safe by itself; the socket shell serializes access, the sim
    shell is single-threaded by construction.
    """

    def __init__(self, node_id: str, lab_id: str, hub: StreamHub,
                 clock: Callable[[], float],
                 send: Callable[[str, bytes], None]):
        self.node_id = node_id
        self.lab_id = lab_id
        self.hub = hub
        self.clock = clock
        self.send = send
        self.formats: dict[str, tuple[ValueFormat, int]] = {}
        self._cache: dict[str, _CacheEntry] = {}
        self._remote_subs: dict[str, set[str]] = {}
        self._tapped: set[str] = set()
        self._inlets: dict[str, Inlet] = {}
        self.links: dict[str, _LinkState] = {}
        self.on_event: Callable[[str, dict], None] | None = None

    # -- publishing ----------------------------------------------------------

    def create_outlet(self, info: StreamInfo):
        outlet = self.hub.create_outlet(info)
        self.register_stream(info)
        return outlet

    def register_stream(self, info: StreamInfo) -> None:
        """Adopt an outlet created directly on the hub as a local stream."""
        self.formats[info.uid] = (info.value_format, info.channel_count)
        self._cache[info.uid] = _CacheEntry(info, None, self.clock())

    def announce_frames(self) -> list[bytes]:
        return [wire.encode_frame(wire.Announce(info)) for info in self.hub.local_infos()]

    def announce_to(self, peers: Iterable[str]) -> None:
        frames = self.announce_frames()
        for peer in peers:
            for frame in frames:
                self.send(peer, frame)

    # -- discovery -----------------------------------------------------------

    def resolve(self, predicate: Callable[[StreamInfo], bool] = lambda _: True) -> list[StreamInfo]:
        """All known streams matching the predicate, in (lab_id, name, uid) order."""
        hits = [e.info for e in self._cache.values() if predicate(e.info)]
        hits.sort(key=lambda i: (i.lab_id, i.name, i.uid))
        return hits

    def owner_of(self, uid: str) -> str | None:
        entry = self._cache.get(uid)
        return entry.peer if entry else None

    # -- subscription ---------------------------------------------------------

    def subscribe(self, uid: str, *, lossless: bool = False,
                  model: ClockModel | None = None) -> Inlet:
        """Subscribe to a stream by uid, local or remote. Idempotent per uid."""
        if uid in self._inlets:
            return self._inlets[uid]
        entry = self._cache.get(uid)
        if entry is None:
            raise KeyError(f"unknown stream {uid}")
        if entry.peer is None:
            inlet = self.hub.subscribe(uid, lossless=lossless,
                                       model=model or IDENTITY_MODEL)
        else:
            # remote source: no identity fallback, a fitted model must be
            # attached before pulls are meaningful
            inlet = Inlet(entry.info, lossless=lossless, model=model)
            self.send(entry.peer, wire.encode_frame(wire.Subscribe(uid)))
        self._inlets[uid] = inlet
        return inlet

    def attach_link_model(self, uid: str, model: ClockModel) -> None:
        self._inlets[uid].attach_model(model)

    # -- clock sync -----------------------------------------------------------

    def send_ping(self, peer: str) -> None:
        now = self.clock()
        record = _PingRecord(t0=now, deadline=now + PING_TIMEOUT)
        state = self.links.setdefault(peer, _LinkState())
        state.pings.append(record)
        state.pending[now] = record
        self.send(peer, wire.encode_frame(wire.ClockPing(now)))

    def fit_link_model(self, peer: str) -> ClockModel:
        """Least-squares clock model for a peer link (peer clock minus ours)."""
        state = self.links.get(peer)
        if state is None or not state.estimates:
            raise InsufficientData(f"no clock exchanges with {peer}")
        return fit_clock_model(state.estimates)

    def measure_link(self, peer: str, window: float) -> LinkMetrics:
        """LinkMetrics from the clock exchanges of the last `window` seconds."""
        now = self.clock()
        state = self.links.get(peer)
        records = [p for p in state.pings if p.t0 >= now - window] if state else []
        concluded = [p for p in records if p.answered or now >= p.deadline]
        rtts = sorted(p.estimate.rtt for p in concluded if p.answered)
        if len(rtts) < 5:
            raise InsufficientData(f"{len(rtts)} exchanges in window, need >= 5")
        median = statistics.median(rtts)
        q1, q3 = _quartiles(rtts)
        unanswered = sum(1 for p in concluded if not p.answered)
        dropped = sum(i.dropped_samples for uid, i in self._inlets.items()
                      if self.owner_of(uid) == peer)
        return LinkMetrics(
            median_rtt=median,
            rtt_jitter=q3 - q1,
            offset_uncertainty=median / 2.0,
            loss_fraction=unanswered / len(concluded),
            dropped_samples=dropped,
        )

    # -- events ---------------------------------------------------------------

    def send_event(self, peer: str, payload: dict) -> None:
        self.send(peer, wire.encode_frame(wire.Event.of(payload)))

    # -- frame handling -------------------------------------------------------

    def handle_frame(self, peer: str, data: bytes) -> None:
        t_arrival = self.clock()
        msg = wire.decode_frame(data, self.formats)
        if isinstance(msg, wire.Announce):
            info = msg.info
            self.formats[info.uid] = (info.value_format, info.channel_count)
            self._cache[info.uid] = _CacheEntry(info, peer, t_arrival)
        elif isinstance(msg, wire.Query):
            for frame in self.announce_frames():
                self.send(peer, frame)
        elif isinstance(msg, wire.Subscribe):
            self._remote_subs.setdefault(msg.uid, set()).add(peer)
            self._ensure_tap(msg.uid)
        elif isinstance(msg, wire.ChunkMsg):
            inlet = self._inlets.get(msg.chunk.stream_uid)
            if inlet is not None:
                inlet.deliver(msg.chunk)
        elif isinstance(msg, wire.ClockPing):
            now = self.clock()
            self.send(peer, wire.encode_frame(wire.ClockPong(msg.t0, now, now)))
        elif isinstance(msg, wire.ClockPong):
            state = self.links.get(peer)
            record = state.pending.pop(msg.t0, None) if state else None
            if record is not None and t_arrival <= record.deadline:
                sample = ClockSample(t0=msg.t0, t1=msg.t1, t2=msg.t2, t3=t_arrival)
                record.estimate = estimate_offset(sample)
        elif isinstance(msg, wire.Event):
            if self.on_event is not None:
                self.on_event(peer, msg.as_dict)
        elif isinstance(msg, wire.Bye):
            self._peer_gone(peer)

    def _ensure_tap(self, uid: str) -> None:
        if uid in self._tapped:
            return
        self._tapped.add(uid)
        fmt = self.formats[uid]

        def forward(chunk: Chunk) -> None:
            frame = wire.encode_frame(wire.ChunkMsg(chunk, *fmt))
            for peer in self._remote_subs.get(uid, ()):
                self.send(peer, frame)

        self.hub.add_tap(uid, forward)

    def _peer_gone(self, peer: str) -> None:
        for uid, inlet in self._inlets.items():
            if self.owner_of(uid) == peer:
                inlet.mark_source_lost()
        for subs in self._remote_subs.values():
            subs.discard(peer)


def _quartiles(sorted_vals: list[float]) -> tuple[float, float]:
    qs = statistics.quantiles(sorted_vals, n=4, method="inclusive")
    return qs[0], qs[2]


# -- netsim shell -----------------------------------------------------------

class SimHost:
    """A LabNode living inside a netsim Simulation."""

    def __init__(self, sim: Simulation, node_id: str, lab_id: str | None = None):
        self.sim = sim
        self.node_id = node_id
        clock = sim.clock(node_id)
        self.hub = StreamHub(clock=clock)
        self.node = LabNode(node_id, lab_id or node_id, self.hub, clock,
                            send=lambda peer, data: sim.deliver(node_id, peer, data))
        sim.on_receive(node_id, self.node.handle_frame)

    def start_announcing(self, peers: list[str], interval: float = DEFAULT_ANNOUNCE_INTERVAL,
                         until: float = 0.0, start: float = 0.0) -> None:
        self.sim.schedule_every(interval, lambda: self.node.announce_to(peers),
                                start=start, until=until)

    def start_clock_sync(self, peer: str, count: int,
                         interval: float = 1.0, start: float = 0.0) -> None:
        for k in range(count):
            self.sim.schedule(start + k * interval, lambda p=peer: self.node.send_ping(p))


def sim_clock_exchange(sim: Simulation, requester: SimHost, peer: str) -> OffsetEstimate:
    """One blocking-style exchange in virtual time; Timeout if the pong never lands."""
    state = requester.node.links.setdefault(peer, _LinkState())
    before = len(state.estimates)
    requester.node.send_ping(peer)
    sim.run(until=sim.sim_time + PING_TIMEOUT)
    estimates = requester.node.links[peer].estimates
    if len(estimates) == before:
        raise Timeout(f"no CLOCK_PONG from {peer}")
    return estimates[-1]

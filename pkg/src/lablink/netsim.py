"""Deterministic discrete-event network simulator with per-node clocks.

Everything a test needs as ground truth (true offsets, drifts, link
latencies) stays queryable, so synchronization error bounds can be
asserted exactly. A simulation is single-threaded; determinism is
guaranteed by (topology, seeds, workload).
"""

from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Callable

from .errors import NoLink, UnknownNode


@dataclass(frozen=True)
class SimNode:
    """Simulated host whose local clock runs at sim_time*(1+drift) + offset."""

    node_id: str
    clock_offset: float = 0.0
    clock_drift: float = 0.0

    def local_time(self, sim_time: float) -> float:
        return sim_time * (1.0 + self.clock_drift) + self.clock_offset


@dataclass(frozen=True)
class LinkModel:
    """Per-direction latency, gaussian jitter truncated at zero, Bernoulli loss."""

    base_latency_fwd: float = 0.0
    base_latency_rev: float = 0.0
    jitter_stddev: float = 0.0
    loss_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.base_latency_fwd < 0 or self.base_latency_rev < 0:
            raise ValueError("latencies must be >= 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")


@dataclass
class _Link:
    a: str
    b: str
    model: LinkModel
    rng: random.Random = field(init=False)

    def __post_init__(self) -> None:
        self.rng = random.Random(self.model.seed)

    def sample_delay(self, src: str) -> float | None:
        """Delay for one frame, or None if dropped. One RNG per link keeps links independent."""
        if self.rng.random() < self.model.loss_prob:
            return None
        base = self.model.base_latency_fwd if src == self.a else self.model.base_latency_rev
        delay = base + self.rng.gauss(0.0, self.model.jitter_stddev) if self.model.jitter_stddev else base
        return max(delay, 0.0)


class Simulation:
    """Virtual-time event loop over simulated nodes and links."""

    def __init__(self):
        self.sim_time = 0.0
        self._nodes: dict[str, SimNode] = {}
        self._links: dict[frozenset, _Link] = {}
        self._queue: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._receivers: dict[str, Callable[[str, bytes], None]] = {}
        self.trace: list[dict] = []

    # -- topology -----------------------------------------------------------

    def add_node(self, node_id: str, clock_offset: float = 0.0,
                 clock_drift: float = 0.0) -> SimNode:
        node = SimNode(node_id, clock_offset, clock_drift)
        self._nodes[node_id] = node
        return node

    def add_link(self, a: str, b: str, model: LinkModel) -> None:
        self._require_node(a)
        self._require_node(b)
        self._links[frozenset((a, b))] = _Link(a, b, model)

    def link_model(self, a: str, b: str) -> LinkModel:
        return self._link(a, b).model

    def _require_node(self, node_id: str) -> SimNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def _link(self, a: str, b: str) -> _Link:
        link = self._links.get(frozenset((a, b)))
        if link is None:
            raise NoLink(f"{a} <-> {b}")
        return link

    # -- clocks -------------------------------------------------------------

    def node_now(self, node_id: str) -> float:
        """Node-local time at the current sim_time."""
        return self._require_node(node_id).local_time(self.sim_time)

    def true_offset(self, frm: str, to: str) -> float:
        """Ground truth: to-node clock minus frm-node clock, right now."""
        return self.node_now(to) - self.node_now(frm)

    def clock(self, node_id: str) -> Callable[[], float]:
        self._require_node(node_id)
        return lambda: self.node_now(node_id)

    # -- scheduling and delivery --------------------------------------------

    def schedule(self, at_sim_time: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self._queue, (at_sim_time, next(self._seq), fn))

    def schedule_every(self, interval: float, fn: Callable[[], None],
                       start: float = 0.0, until: float | None = None) -> None:
        t = start
        while until is None or t <= until:
            self.schedule(t, fn)
            if until is None:
                break
            t += interval

    def on_receive(self, node_id: str, handler: Callable[[str, bytes], None]) -> None:
        self._require_node(node_id)
        self._receivers[node_id] = handler

    def deliver(self, frm: str, to: str, frame: bytes, kind: str = "frame") -> None:
        """Send one frame; arrival order follows arrival time, ties by send order."""
        link = self._link(frm, to)
        delay = link.sample_delay(frm)
        if delay is None:
            self._log("drop", frm=frm, to=to, kind=kind, size=len(frame))
            return
        self._log("send", frm=frm, to=to, kind=kind, size=len(frame), delay=delay)
        arrival = self.sim_time + delay

        def arrive():
            self._log("recv", frm=frm, to=to, kind=kind, size=len(frame))
            handler = self._receivers.get(to)
            if handler is not None:
                handler(frm, frame)

        self.schedule(arrival, arrive)

    def run(self, until: float | None = None) -> None:
        while self._queue:
            t, _, fn = self._queue[0]
            if until is not None and t > until:
                break
            heapq.heappop(self._queue)
            self.sim_time = max(self.sim_time, t)
            fn()
        if until is not None:
            self.sim_time = max(self.sim_time, until)

    # -- tracing ------------------------------------------------------------

    def _log(self, event: str, **fields) -> None:
        entry = {"t": self.sim_time, "event": event}
        entry.update(fields)
        self.trace.append(entry)

    def log(self, event: str, **fields) -> None:
        """Workload-visible trace hook for application-level events."""
        self._log(event, **fields)

    def trace_jsonl(self) -> str:
        """Trace as line-delimited JSON, stable for golden-file comparison."""
        return "\n".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.trace
        )


def run_trace(build: Callable[[Simulation], None], until: float) -> str:
    """Build a workload on a fresh simulation, run it, return the JSONL trace."""
    sim = Simulation()
    build(sim)
    sim.run(until)
    return sim.trace_jsonl()

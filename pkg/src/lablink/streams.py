"""Typed, timestamped multichannel streams: outlets publish, inlets consume.

Local delivery happens through a StreamHub; the transport layer bridges
hubs on different nodes. Timestamps entering an inlet are local to the
publishing node; pull_chunk maps them onto the common timeline through
the ClockModel attached to the inlet.
"""

from __future__ import annotations

import hashlib
import math
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Sequence

from .errors import (ClockModelMissing, Closed, InvalidSpec, ShapeMismatch,
                     SourceLost)
from .timebase import ClockModel, IDENTITY_MODEL, to_common_time

#: Live inlets keep at most this many samples and drop the oldest beyond it.
#: Freshness beats completeness for real-time linking; the recorder opts out
#: via lossless=True.
INLET_BUFFER_SIZE = 10_000


class StreamKind(str, Enum):
    SIGNAL = "signal"
    MARKER = "marker"
    VIDEO = "video"
    STATE = "state"


class ValueFormat(str, Enum):
    F32 = "f32"
    F64 = "f64"
    UTF8 = "utf8"
    BYTES = "bytes"


def new_uid() -> str:
    """Fresh 16-byte stream uid as 32 hex characters."""
    return uuid.uuid4().hex


@dataclass(frozen=True)
class StreamInfo:
    """Declared characteristics of a stream (the format contract)."""

    uid: str
    name: str
    kind: StreamKind
    channel_count: int
    nominal_rate: float  # Hz; 0.0 = irregular
    value_format: ValueFormat
    units: tuple[str, ...] = ()
    lab_id: str = ""
    metadata: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if len(bytes.fromhex(self.uid)) != 16:
            raise ValueError(f"uid must be 16 bytes hex, got {self.uid!r}")
        if self.channel_count < 1:
            raise ValueError("channel_count must be >= 1")
        if self.nominal_rate < 0:
            raise ValueError("nominal_rate must be >= 0")
        if self.kind is StreamKind.MARKER:
            if self.value_format is not ValueFormat.UTF8 or self.nominal_rate != 0.0:
                raise ValueError("marker streams are utf8 with nominal_rate 0.0")

    @property
    def metadata_dict(self) -> dict[str, str]:
        return dict(self.metadata)

    def to_json_dict(self) -> dict:
        return {
            "uid": self.uid,
            "name": self.name,
            "kind": self.kind.value,
            "channel_count": self.channel_count,
            "nominal_rate": self.nominal_rate,
            "value_format": self.value_format.value,
            "units": list(self.units),
            "lab_id": self.lab_id,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "StreamInfo":
        return cls(
            uid=d["uid"],
            name=d["name"],
            kind=StreamKind(d["kind"]),
            channel_count=int(d["channel_count"]),
            nominal_rate=float(d["nominal_rate"]),
            value_format=ValueFormat(d["value_format"]),
            units=tuple(d.get("units", ())),
            lab_id=d.get("lab_id", ""),
            metadata=tuple(sorted(d.get("metadata", {}).items())),
        )


Sample = tuple[float, tuple]


@dataclass(frozen=True)
class Chunk:
    """A batch of timestamped samples for one stream. Immutable once built."""

    stream_uid: str
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        prev = -math.inf
        for ts, _ in self.samples:
            if not math.isnan(ts):
                if ts < prev:
                    raise ValueError("timestamps must be non-decreasing within a chunk")
                prev = ts

    def __len__(self) -> int:
        return len(self.samples)


def make_chunk(stream_uid: str, samples: Sequence[tuple[float, Sequence]]) -> Chunk:
    return Chunk(stream_uid, tuple((float(ts), tuple(vals)) for ts, vals in samples))


class Inlet:
    """Consuming endpoint of one stream.

    Buffering is bounded drop-oldest by default; lossless inlets (recorder)
    grow without bound. Samples are held in publisher-local time and mapped
    to the common timeline on pull.
    """

    def __init__(self, info: StreamInfo, *, lossless: bool = False,
                 model: ClockModel | None = IDENTITY_MODEL,
                 max_buffer: int = INLET_BUFFER_SIZE):
        self.info = info
        self.lossless = lossless
        self.model = model
        self.max_buffer = max_buffer
        self.dropped_samples = 0
        self.on_chunk: Callable[[Chunk], None] | None = None
        self._buf: list[Sample] = []
        self._cond = threading.Condition()
        self._source_alive = True

    def attach_model(self, model: ClockModel) -> None:
        self.model = model

    def deliver(self, chunk: Chunk) -> None:
        with self._cond:
            self._buf.extend(chunk.samples)
            if not self.lossless and len(self._buf) > self.max_buffer:
                excess = len(self._buf) - self.max_buffer
                del self._buf[:excess]
                self.dropped_samples += excess
            self._cond.notify_all()
        if self.on_chunk is not None:
            self.on_chunk(chunk)

    def mark_source_lost(self) -> None:
        with self._cond:
            self._source_alive = False
            self._cond.notify_all()

    def pull_chunk(self, max_samples: int = 1024, timeout: float = 0.0) -> Chunk:
        """Up to max_samples in timestamp order, on the common timeline.

        Returns an empty chunk on timeout; raises SourceLost once the
        publisher is gone and the buffer is drained.
        """
        if self.model is None:
            raise ClockModelMissing(self.info.uid)
        deadline = time.monotonic() + timeout
        with self._cond:
            while not self._buf:
                if not self._source_alive:
                    raise SourceLost(self.info.uid)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return Chunk(self.info.uid, ())
                self._cond.wait(remaining)
            self._buf.sort(key=lambda s: s[0])
            taken, self._buf = self._buf[:max_samples], self._buf[max_samples:]
        mapped = tuple((to_common_time(self.model, ts), vals) for ts, vals in taken)
        return Chunk(self.info.uid, mapped)

    def drain(self, max_samples: int = 1_000_000) -> Chunk:
        return self.pull_chunk(max_samples=max_samples, timeout=0.0)


class Outlet:
    """Publishing endpoint of one stream; exactly one producer at a time."""

    def __init__(self, info: StreamInfo, hub: "StreamHub"):
        self.info = info
        self._hub = hub
        self._closed = False
        self._last_stamp = -math.inf

    @property
    def closed(self) -> bool:
        return self._closed

    def push_chunk(self, chunk: Chunk) -> None:
        if self._closed:
            raise Closed(self.info.uid)
        if chunk.stream_uid != self.info.uid:
            raise ShapeMismatch(f"chunk for {chunk.stream_uid}, outlet is {self.info.uid}")
        for _, vals in chunk.samples:
            if len(vals) != self.info.channel_count:
                raise ShapeMismatch(
                    f"expected {self.info.channel_count} channels, got {len(vals)}")
            self._check_formats(vals)
        chunk = self._stamp_missing(chunk)
        self._hub.dispatch(self, chunk)

    def _check_formats(self, vals: tuple) -> None:
        fmt = self.info.value_format
        for v in vals:
            if fmt in (ValueFormat.F32, ValueFormat.F64):
                if not isinstance(v, (int, float)):
                    raise ShapeMismatch(f"numeric value expected, got {type(v).__name__}")
            elif fmt is ValueFormat.UTF8:
                if not isinstance(v, str):
                    raise ShapeMismatch(f"str value expected, got {type(v).__name__}")
            elif fmt is ValueFormat.BYTES:
                if not isinstance(v, (bytes, bytearray)):
                    raise ShapeMismatch(f"bytes value expected, got {type(v).__name__}")

    def _stamp_missing(self, chunk: Chunk) -> Chunk:
        if not any(math.isnan(ts) for ts, _ in chunk.samples):
            return chunk
        out = []
        for ts, vals in chunk.samples:
            if math.isnan(ts):
                now = self._hub.clock()
                # strictly increasing even when the clock has not ticked
                ts = max(now, math.nextafter(self._last_stamp, math.inf))
            self._last_stamp = ts
            out.append((ts, vals))
        return Chunk(chunk.stream_uid, tuple(out))

    def close(self) -> None:
        self._closed = True
        self._hub.outlet_closed(self)


class StreamHub:
    """Local registry routing pushed chunks to subscribed inlets.

    Thread-safe for concurrent registration, subscription, and dispatch.
    The clock is injectable so simulated nodes can stamp with virtual time.
    """

    def __init__(self, clock: Callable[[], float] = time.time):
        self.clock = clock
        self._lock = threading.Lock()
        self._outlets: dict[str, Outlet] = {}
        self._subscribers: dict[str, list[Callable[[Chunk], None]]] = {}

    def create_outlet(self, info: StreamInfo) -> Outlet:
        with self._lock:
            if info.uid in self._outlets:
                raise ValueError(f"outlet {info.uid} already registered")
            outlet = Outlet(info, self)
            self._outlets[info.uid] = outlet
        return outlet

    def local_infos(self) -> list[StreamInfo]:
        with self._lock:
            return [o.info for o in self._outlets.values()]

    def get_outlet(self, uid: str) -> Outlet | None:
        with self._lock:
            return self._outlets.get(uid)

    def subscribe(self, uid: str, *, lossless: bool = False,
                  model: ClockModel = IDENTITY_MODEL) -> Inlet:
        with self._lock:
            outlet = self._outlets.get(uid)
            if outlet is None:
                raise SourceLost(uid)
            inlet = Inlet(outlet.info, lossless=lossless, model=model)
            self._subscribers.setdefault(uid, []).append(inlet.deliver)
        return inlet

    def add_tap(self, uid: str, callback: Callable[[Chunk], None]) -> None:
        """Raw chunk callback, used by the transport to forward to remote subscribers."""
        with self._lock:
            self._subscribers.setdefault(uid, []).append(callback)

    def dispatch(self, outlet: Outlet, chunk: Chunk) -> None:
        with self._lock:
            sinks = list(self._subscribers.get(outlet.info.uid, ()))
        for sink in sinks:
            sink(chunk)

    def outlet_closed(self, outlet: Outlet) -> None:
        with self._lock:
            self._outlets.pop(outlet.info.uid, None)
            sinks = self._subscribers.pop(outlet.info.uid, [])
        for sink in sinks:
            lost = getattr(sink, "__self__", None)
            if isinstance(lost, Inlet):
                lost.mark_source_lost()


# -- synthetic sources ------------------------------------------------------

class Waveform(str, Enum):
    SINE = "sine"
    SQUARE = "square"
    COUNTER = "counter"
    MARKER_SCRIPT = "marker_script"


@dataclass(frozen=True)
class SyntheticSpec:
    """Deterministic test stimulus description."""

    waveform: Waveform
    rate: float = 100.0
    channels: int = 1
    amplitude: float = 1.0
    frequency: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise InvalidSpec("rate must be > 0")
        if self.channels < 1:
            raise InvalidSpec("channels must be >= 1")


_MARKER_LABELS = ("pick", "place", "pour", "reach")


def synthetic_stream_info(spec: SyntheticSpec, lab_id: str = "local",
                          name: str | None = None) -> StreamInfo:
    """StreamInfo for a synthetic source; uid is a deterministic hash of the spec."""
    key = f"{spec.waveform.value}|{spec.rate}|{spec.channels}|{spec.amplitude}|{spec.frequency}|{spec.seed}|{lab_id}"
    uid = hashlib.md5(key.encode()).hexdigest()
    if spec.waveform is Waveform.MARKER_SCRIPT:
        return StreamInfo(uid=uid, name=name or "synthetic-markers", kind=StreamKind.MARKER,
                          channel_count=1, nominal_rate=0.0, value_format=ValueFormat.UTF8,
                          units=("",), lab_id=lab_id)
    return StreamInfo(uid=uid, name=name or f"synthetic-{spec.waveform.value}",
                      kind=StreamKind.SIGNAL, channel_count=spec.channels,
                      nominal_rate=spec.rate, value_format=ValueFormat.F32,
                      units=("a.u.",) * spec.channels, lab_id=lab_id)


def synthesize_signal(spec: SyntheticSpec, duration: float,
                      chunk_size: int = 128, t0: float = 0.0) -> Iterator[Chunk]:
    """Deterministic chunks for the given spec; bit-identical for equal seeds."""
    info = synthetic_stream_info(spec)
    n = int(round(duration * spec.rate))
    rng = random.Random(spec.seed)
    open_label: str | None = None

    def value_at(i: int) -> tuple:
        nonlocal open_label
        if spec.waveform is Waveform.COUNTER:
            return (float(i),) * spec.channels
        if spec.waveform is Waveform.SINE:
            v = spec.amplitude * math.sin(2 * math.pi * spec.frequency * i / spec.rate)
            return (v,) * spec.channels
        if spec.waveform is Waveform.SQUARE:
            phase = (spec.frequency * i / spec.rate) % 1.0
            return (spec.amplitude if phase < 0.5 else -spec.amplitude,) * spec.channels
        # marker script: seeded open/close episode walk
        if open_label is not None and rng.random() < 0.5:
            label, open_label = f"{open_label}.end", None
        else:
            if open_label is None:
                open_label = rng.choice(_MARKER_LABELS)
                label = f"{open_label}.begin"
            else:
                label = "note"
        return (label,)

    for start in range(0, n, chunk_size):
        samples = tuple(
            (t0 + i / spec.rate, value_at(i))
            for i in range(start, min(start + chunk_size, n))
        )
        yield Chunk(info.uid, samples)

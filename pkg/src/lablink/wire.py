"""Binary wire protocol: "LLNK" frames with a length-prefixed payload.

Layout (all integers little-endian, floats IEEE-754 LE):

    magic   4B  = b"LLNK"
    version 1B  = 0x01
    type    1B
    length  4B  u32, byte length of payload
    payload

Message payloads:

    ANNOUNCE 0x01  StreamInfo as canonical UTF-8 JSON
    QUERY    0x02  empty
    SUBSCRIBE 0x03 uid, 16 bytes
    CHUNK    0x04  uid 16B, sample_count u32, per sample: timestamp f64
                   + channel values (f32/f64 raw; utf8/bytes u32-length-prefixed)
    CLOCK_PING 0x05  t0 f64
    CLOCK_PONG 0x06  t0, t1, t2 f64
    EVENT    0x07  UTF-8 JSON object
    BYE      0x08  empty

CHUNK value layout depends on the stream's declared value_format and
channel_count, which travel in ANNOUNCE, not in the frame itself; the
decoder therefore needs a uid -> (format, channels) resolver.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Mapping, Union

from .errors import (BadMagic, BadVersion, DecodeError, TrailingData,
                     Truncated, UnknownStream, UnknownType)
from .streams import Chunk, StreamInfo, ValueFormat

MAGIC = b"LLNK"
VERSION = 0x01
HEADER = struct.Struct("<4sBBI")

T_ANNOUNCE = 0x01
T_QUERY = 0x02
T_SUBSCRIBE = 0x03
T_CHUNK = 0x04
T_CLOCK_PING = 0x05
T_CLOCK_PONG = 0x06
T_EVENT = 0x07
T_BYE = 0x08


@dataclass(frozen=True)
class Announce:
    info: StreamInfo


@dataclass(frozen=True)
class Query:
    pass


@dataclass(frozen=True)
class Subscribe:
    uid: str


@dataclass(frozen=True)
class ChunkMsg:
    chunk: Chunk
    value_format: ValueFormat
    channel_count: int


@dataclass(frozen=True)
class ClockPing:
    t0: float


@dataclass(frozen=True)
class ClockPong:
    t0: float
    t1: float
    t2: float


@dataclass(frozen=True)
class Event:
    payload: tuple[tuple[str, object], ...]

    @classmethod
    def of(cls, d: dict) -> "Event":
        return cls(tuple(sorted(d.items())))

    @property
    def as_dict(self) -> dict:
        return dict(self.payload)


@dataclass(frozen=True)
class Bye:
    pass


Message = Union[Announce, Query, Subscribe, ChunkMsg, ClockPing, ClockPong, Event, Bye]

FormatMap = Mapping[str, tuple[ValueFormat, int]]


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _encode_values(fmt: ValueFormat, vals: tuple) -> bytes:
    if fmt is ValueFormat.F32:
        return struct.pack(f"<{len(vals)}f", *vals)
    if fmt is ValueFormat.F64:
        return struct.pack(f"<{len(vals)}d", *vals)
    out = bytearray()
    for v in vals:
        raw = v.encode() if isinstance(v, str) else bytes(v)
        out += struct.pack("<I", len(raw)) + raw
    return bytes(out)


def _encode_payload(msg: Message) -> tuple[int, bytes]:
    if isinstance(msg, Announce):
        return T_ANNOUNCE, _canonical_json(msg.info.to_json_dict())
    if isinstance(msg, Query):
        return T_QUERY, b""
    if isinstance(msg, Subscribe):
        return T_SUBSCRIBE, bytes.fromhex(msg.uid)
    if isinstance(msg, ChunkMsg):
        parts = [bytes.fromhex(msg.chunk.stream_uid),
                 struct.pack("<I", len(msg.chunk.samples))]
        for ts, vals in msg.chunk.samples:
            parts.append(struct.pack("<d", ts))
            parts.append(_encode_values(msg.value_format, vals))
        return T_CHUNK, b"".join(parts)
    if isinstance(msg, ClockPing):
        return T_CLOCK_PING, struct.pack("<d", msg.t0)
    if isinstance(msg, ClockPong):
        return T_CLOCK_PONG, struct.pack("<3d", msg.t0, msg.t1, msg.t2)
    if isinstance(msg, Event):
        return T_EVENT, _canonical_json(msg.as_dict)
    if isinstance(msg, Bye):
        return T_BYE, b""
    raise TypeError(f"not a wire message: {msg!r}")


def encode_frame(msg: Message) -> bytes:
    msg_type, payload = _encode_payload(msg)
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


class _Reader:
    """Cursor over a payload that raises Truncated on underrun."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"payload underrun at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def _decode_chunk(r: _Reader, formats: FormatMap | None) -> ChunkMsg:
    uid = r.take(16).hex()
    if formats is None or uid not in formats:
        raise UnknownStream(uid)
    fmt, channels = formats[uid]
    count = r.u32()
    samples = []
    for _ in range(count):
        ts = r.f64()
        if fmt is ValueFormat.F32:
            vals = struct.unpack(f"<{channels}f", r.take(4 * channels))
        elif fmt is ValueFormat.F64:
            vals = struct.unpack(f"<{channels}d", r.take(8 * channels))
        else:
            raws = [r.take(r.u32()) for _ in range(channels)]
            if fmt is ValueFormat.UTF8:
                vals = tuple(raw.decode() for raw in raws)
            else:
                vals = tuple(raws)
        samples.append((ts, tuple(vals)))
    return ChunkMsg(Chunk(uid, tuple(samples)), fmt, channels)


def _decode_payload(msg_type: int, payload: bytes, formats: FormatMap | None) -> Message:
    r = _Reader(payload)
    if msg_type == T_ANNOUNCE:
        try:
            info = StreamInfo.from_json_dict(json.loads(payload.decode()))
        except (ValueError, KeyError) as exc:
            raise Truncated(f"bad ANNOUNCE payload: {exc}") from exc
        return Announce(info)
    if msg_type == T_QUERY:
        msg: Message = Query()
    elif msg_type == T_SUBSCRIBE:
        msg = Subscribe(r.take(16).hex())
    elif msg_type == T_CHUNK:
        msg = _decode_chunk(r, formats)
    elif msg_type == T_CLOCK_PING:
        msg = ClockPing(r.f64())
    elif msg_type == T_CLOCK_PONG:
        msg = ClockPong(r.f64(), r.f64(), r.f64())
    elif msg_type == T_EVENT:
        try:
            msg = Event.of(json.loads(payload.decode()))
        except ValueError as exc:
            raise Truncated(f"bad EVENT payload: {exc}") from exc
    elif msg_type == T_BYE:
        msg = Bye()
    else:
        raise UnknownType(f"msg_type 0x{msg_type:02x}")
    if msg_type not in (T_ANNOUNCE, T_EVENT) and not r.exhausted:
        raise TrailingData(f"{len(payload) - r.pos} extra payload bytes")
    return msg


def decode_frame(data: bytes, formats: FormatMap | None = None) -> Message:
    """Decode exactly one frame; any shortfall raises Truncated."""
    if len(data) < HEADER.size:
        raise Truncated(f"{len(data)} bytes is shorter than a frame header")
    magic, version, msg_type, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(repr(magic))
    if version != VERSION:
        raise BadVersion(f"0x{version:02x}")
    end = HEADER.size + payload_len
    if len(data) < end:
        raise Truncated(f"payload needs {payload_len} bytes, have {len(data) - HEADER.size}")
    if len(data) > end:
        raise TrailingData(f"{len(data) - end} bytes after frame")
    return _decode_payload(msg_type, data[HEADER.size:end], formats)


class FrameBuffer:
    """Incremental framer for byte-stream links: feed bytes, pop raw frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        frames = []
        while True:
            if len(self._buf) < HEADER.size:
                break
            magic, version, _, payload_len = HEADER.unpack_from(self._buf)
            if magic != MAGIC:
                raise BadMagic(repr(bytes(magic)))
            if version != VERSION:
                raise BadVersion(f"0x{version:02x}")
            end = HEADER.size + payload_len
            if len(self._buf) < end:
                break
            frames.append(bytes(self._buf[:end]))
            del self._buf[:end]
        return frames

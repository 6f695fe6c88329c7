"""Seeded random generators shared by the property and acceptance tests."""

from __future__ import annotations

import random
import string
import struct

from lablink import wire
from lablink.recorder import AnnotationTier, PartiturDocument, Segment, assemble_partitur
from lablink.streams import Chunk, StreamInfo, StreamKind, ValueFormat
from lablink.timebase import ClockModel


def f32(x: float) -> float:
    """Round to the nearest value representable in 32-bit float."""
    return struct.unpack("<f", struct.pack("<f", x))[0]


def random_uid(rng: random.Random) -> str:
    return bytes(rng.randrange(256) for _ in range(16)).hex()


def random_name(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(n))


def random_stream_info(rng: random.Random, kind: StreamKind | None = None) -> StreamInfo:
    if kind is None:
        kind = rng.choice(list(StreamKind))
    if kind is StreamKind.MARKER:
        fmt, rate, channels = ValueFormat.UTF8, 0.0, rng.randint(1, 3)
    else:
        fmt = rng.choice([ValueFormat.F32, ValueFormat.F64, ValueFormat.UTF8,
                          ValueFormat.BYTES])
        rate = rng.choice([0.0, 10.0, 256.0, 1000.0])
        channels = rng.randint(1, 8)
    return StreamInfo(
        uid=random_uid(rng),
        name=random_name(rng),
        kind=kind,
        channel_count=channels,
        nominal_rate=rate,
        value_format=fmt,
        units=tuple(rng.choice(["", "uV", "m/s", "a.u."]) for _ in range(channels)),
        lab_id=random_name(rng, 4),
        metadata=tuple(sorted((random_name(rng, 3), random_name(rng, 5))
                              for _ in range(rng.randint(0, 3)))),
    )


def random_value(rng: random.Random, fmt: ValueFormat):
    if fmt is ValueFormat.F32:
        return f32(rng.uniform(-1e6, 1e6))
    if fmt is ValueFormat.F64:
        return rng.uniform(-1e9, 1e9)
    if fmt is ValueFormat.UTF8:
        return random_name(rng, rng.randint(0, 12))
    return bytes(rng.randrange(256) for _ in range(rng.randint(0, 16)))


def random_samples(rng: random.Random, info: StreamInfo, n: int | None = None,
                   t0: float = 0.0):
    n = rng.randint(0, 20) if n is None else n
    times = sorted(t0 + rng.uniform(0, 100) for _ in range(n))
    return tuple(
        (t, tuple(random_value(rng, info.value_format)
                  for _ in range(info.channel_count)))
        for t in times
    )


def random_chunk_msg(rng: random.Random, formats: dict) -> wire.ChunkMsg:
    info = random_stream_info(rng)
    formats[info.uid] = (info.value_format, info.channel_count)
    chunk = Chunk(info.uid, random_samples(rng, info))
    return wire.ChunkMsg(chunk, info.value_format, info.channel_count)


def random_message(rng: random.Random, formats: dict) -> wire.Message:
    kind = rng.randrange(8)
    if kind == 0:
        return wire.Announce(random_stream_info(rng))
    if kind == 1:
        return wire.Query()
    if kind == 2:
        return wire.Subscribe(random_uid(rng))
    if kind == 3:
        return random_chunk_msg(rng, formats)
    if kind == 4:
        return wire.ClockPing(rng.uniform(0, 1e6))
    if kind == 5:
        t0 = rng.uniform(0, 1e6)
        t1 = t0 + rng.uniform(0, 1)
        return wire.ClockPong(t0, t1, t1 + rng.uniform(0, 0.01))
    if kind == 6:
        return wire.Event.of({
            random_name(rng, 4): rng.choice([rng.randint(0, 99), random_name(rng),
                                             rng.uniform(-5, 5), True])
            for _ in range(rng.randint(0, 4))
        })
    return wire.Bye()


def random_tier(rng: random.Random) -> AnnotationTier:
    segments = []
    for _ in range(rng.randint(0, 6)):
        start = rng.uniform(0, 50)
        segments.append(Segment(start, start + rng.uniform(0, 10),
                                random_name(rng, 4), random_name(rng, 6)))
    return AnnotationTier(random_name(rng, 5), random_name(rng, 8),
                          tuple(segments))


def random_document(rng: random.Random) -> PartiturDocument:
    tracks = []
    for _ in range(rng.randint(0, 4)):
        info = random_stream_info(rng)
        model = ClockModel(reference_time=rng.uniform(0, 100),
                           offset_at_reference=rng.uniform(-1, 1),
                           drift=rng.uniform(-5e-4, 5e-4))
        tracks.append((info, random_samples(rng, info), model))
    tiers = [random_tier(rng) for _ in range(rng.randint(0, 3))]
    return assemble_partitur(random_name(rng), tracks, tiers,
                             recorder_host="testhost", created_at=rng.uniform(0, 1e9))

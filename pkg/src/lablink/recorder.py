"""Time-aligned recording to Partitur score files, annotation, and replay.

A Partitur document is a self-contained JSON "score": multiple signal
tracks on one common timeline plus annotation tiers whose labels resolve
to ontology concepts. Recording is lossless (unbounded inlet buffers) in
contrast to the drop-oldest live path, because offline analysis needs
completeness rather than freshness.
"""

from __future__ import annotations

import base64
import json
import math
import socket
import time
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (ClockModelMissing, EmptyDocument, MalformedDocument,
                     NoInlets, NonNumericTrack, SourceLost, UnknownNamespace,
                     UnsupportedVersion)
from .streams import Chunk, Inlet, Sample, StreamHub, StreamInfo, ValueFormat
from .timebase import ClockModel

PARTITUR_VERSION = 1


@dataclass(frozen=True)
class SignalTrack:
    info: StreamInfo
    samples: tuple[Sample, ...]  # common-timeline timestamps, sorted


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    label: str
    concept_id: str = ""

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError(f"segment end {self.end} before start {self.start}")


@dataclass(frozen=True)
class AnnotationTier:
    tier_name: str
    ontology_namespace: str
    segments: tuple[Segment, ...]


@dataclass(frozen=True)
class Provenance:
    recorder_host: str = ""
    created_at: float = 0.0
    clock_models: tuple[tuple[str, ClockModel], ...] = ()  # per track uid


@dataclass(frozen=True)
class PartiturDocument:
    session_id: str
    origin_common_time: float
    duration: float
    signal_tracks: tuple[SignalTrack, ...]
    annotation_tiers: tuple[AnnotationTier, ...] = ()
    provenance: Provenance = Provenance()
    version: int = PARTITUR_VERSION


@dataclass(frozen=True)
class OntologyRegistry:
    """Concept definitions under one namespace prefix."""

    namespace: str
    concepts: tuple[tuple[str, str], ...]  # concept_id -> definition

    @property
    def concept_ids(self) -> frozenset[str]:
        return frozenset(cid for cid, _ in self.concepts)

    @classmethod
    def from_json_dict(cls, d: dict) -> "OntologyRegistry":
        return cls(namespace=d["namespace"],
                   concepts=tuple(sorted(d["concepts"].items())))


# -- assembly ---------------------------------------------------------------

def assemble_partitur(session_id: str,
                      tracks: Sequence[tuple[StreamInfo, Sequence[Sample], ClockModel]],
                      tiers: Sequence[AnnotationTier] = (),
                      recorder_host: str = "",
                      created_at: float = 0.0) -> PartiturDocument:
    """Build a document from per-track samples already on the common timeline.

    Per-track samples get a stable timestamp sort (arrival order breaks
    ties); tracks themselves are ordered by stream uid so the document is
    deterministic regardless of consumption interleaving.
    """
    built = []
    for info, samples, model in sorted(tracks, key=lambda t: t[0].uid):
        ordered = tuple(sorted(samples, key=lambda s: s[0]))
        built.append((SignalTrack(info, ordered), model))

    points = [s[0] for track, _ in built for s in track.samples]
    points += [seg.start for tier in tiers for seg in tier.segments]
    points += [seg.end for tier in tiers for seg in tier.segments]
    origin = min(points) if points else 0.0
    duration = (max(points) - origin) if points else 0.0

    return PartiturDocument(
        session_id=session_id,
        origin_common_time=origin,
        duration=duration,
        signal_tracks=tuple(t for t, _ in built),
        annotation_tiers=tuple(tiers),
        provenance=Provenance(
            recorder_host=recorder_host or socket.gethostname(),
            created_at=created_at,
            clock_models=tuple((t.info.uid, m) for t, m in built),
        ),
    )


def record_to_partitur(inlets: Sequence[Inlet], stop_condition: Callable[[], bool],
                       session_id: str = "session", poll: float = 0.02,
                       clock: Callable[[], float] = time.time) -> PartiturDocument:
    """Drain lossless inlets until the stop condition holds, then assemble.

    Inlet timestamps are mapped onto the common timeline by each inlet's
    own ClockModel on pull; a missing model is an error, not identity.
    """
    if not inlets:
        raise NoInlets("recording needs at least one inlet")
    for inlet in inlets:
        if inlet.model is None:
            raise ClockModelMissing(inlet.info.uid)
    collected: dict[str, list[Sample]] = {i.info.uid: [] for i in inlets}

    def drain_all():
        for inlet in inlets:
            try:
                chunk = inlet.drain()
            except SourceLost:
                continue
            collected[inlet.info.uid].extend(chunk.samples)

    while not stop_condition():
        drain_all()
        time.sleep(poll)
    drain_all()

    tracks = [(i.info, collected[i.info.uid], i.model) for i in inlets]
    return assemble_partitur(session_id, tracks, created_at=clock())


# -- serialization ----------------------------------------------------------

def _value_to_json(fmt: ValueFormat, v):
    if fmt is ValueFormat.BYTES:
        return base64.b64encode(bytes(v)).decode()
    return v


def _value_from_json(fmt: ValueFormat, v):
    if fmt is ValueFormat.BYTES:
        return base64.b64decode(v)
    if fmt in (ValueFormat.F32, ValueFormat.F64):
        return float(v)
    return v


def _model_to_json(m: ClockModel) -> dict:
    return {"reference_time": m.reference_time,
            "offset_at_reference": m.offset_at_reference,
            "drift": m.drift}


def write_partitur(doc: PartiturDocument) -> bytes:
    """Serialize to the `.partitur.json` format; floats keep full precision."""
    payload = {
        "format": "partitur",
        "version": doc.version,
        "session_id": doc.session_id,
        "timeline": {"origin_common_time": doc.origin_common_time,
                     "duration": doc.duration},
        "signal_tracks": [
            {
                "info": t.info.to_json_dict(),
                "samples": [
                    [ts, [_value_to_json(t.info.value_format, v) for v in vals]]
                    for ts, vals in t.samples
                ],
            }
            for t in doc.signal_tracks
        ],
        "annotation_tiers": [
            {
                "tier_name": tier.tier_name,
                "ontology_namespace": tier.ontology_namespace,
                "segments": [[s.start, s.end, s.label, s.concept_id]
                             for s in tier.segments],
            }
            for tier in doc.annotation_tiers
        ],
        "provenance": {
            "recorder_host": doc.provenance.recorder_host,
            "created_at": doc.provenance.created_at,
            "clock_models": {uid: _model_to_json(m)
                             for uid, m in doc.provenance.clock_models},
        },
    }
    return json.dumps(payload, indent=1, allow_nan=False).encode()


def read_partitur(data: bytes) -> PartiturDocument:
    try:
        payload = json.loads(data.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedDocument(str(exc)) from exc
    if not isinstance(payload, dict) or payload.get("format") != "partitur":
        raise MalformedDocument("not a partitur document")
    if payload.get("version") != PARTITUR_VERSION:
        raise UnsupportedVersion(str(payload.get("version")))
    try:
        tracks = []
        for t in payload["signal_tracks"]:
            info = StreamInfo.from_json_dict(t["info"])
            samples = tuple(
                (float(ts), tuple(_value_from_json(info.value_format, v) for v in vals))
                for ts, vals in t["samples"]
            )
            tracks.append(SignalTrack(info, samples))
        tiers = tuple(
            AnnotationTier(
                tier_name=t["tier_name"],
                ontology_namespace=t["ontology_namespace"],
                segments=tuple(Segment(*seg) for seg in t["segments"]),
            )
            for t in payload["annotation_tiers"]
        )
        prov = payload["provenance"]
        provenance = Provenance(
            recorder_host=prov["recorder_host"],
            created_at=prov["created_at"],
            clock_models=tuple(sorted(
                (uid, ClockModel(**m)) for uid, m in prov["clock_models"].items()
            )),
        )
        timeline = payload["timeline"]
        return PartiturDocument(
            session_id=payload["session_id"],
            origin_common_time=float(timeline["origin_common_time"]),
            duration=float(timeline["duration"]),
            signal_tracks=tuple(tracks),
            annotation_tiers=tiers,
            provenance=provenance,
            version=payload["version"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(str(exc)) from exc


# -- annotation validation --------------------------------------------------

def validate_annotations(doc: PartiturDocument,
                         registries: Iterable[OntologyRegistry]) -> list[tuple[str, int, str]]:
    """(tier, segment index, unknown concept) per violation; empty list = ok.

    A tier with an empty namespace is unvalidated free text.
    """
    by_ns = {r.namespace: r for r in registries}
    violations = []
    for tier in doc.annotation_tiers:
        if not tier.ontology_namespace:
            continue
        registry = by_ns.get(tier.ontology_namespace)
        if registry is None:
            raise UnknownNamespace(tier.ontology_namespace)
        known = registry.concept_ids
        for idx, seg in enumerate(tier.segments):
            if seg.concept_id not in known:
                violations.append((tier.tier_name, idx, seg.concept_id))
    return violations


# -- marker pairing ---------------------------------------------------------

def markers_to_tier(samples: Sequence[Sample], tier_name: str = "episodes",
                    ontology_namespace: str = "",
                    begin_suffix: str = ".begin", end_suffix: str = ".end",
                    track_end: float | None = None,
                    concept_for: Callable[[str], str] = lambda label: label,
                    ) -> tuple[AnnotationTier, list[str]]:
    """Pair "X.begin"/"X.end" markers into segments.

    An unpaired begin closes at track end; an unpaired end is reported as
    a violation; a marker with neither suffix becomes a zero-length
    segment. Marker channel 0 carries the label.
    """
    if track_end is None:
        track_end = samples[-1][0] if samples else 0.0
    open_begins: dict[str, list[float]] = {}
    segments: list[Segment] = []
    violations: list[str] = []
    for ts, vals in samples:
        label = vals[0]
        if label.endswith(begin_suffix):
            name = label[: -len(begin_suffix)]
            open_begins.setdefault(name, []).append(ts)
        elif label.endswith(end_suffix):
            name = label[: -len(end_suffix)]
            starts = open_begins.get(name)
            if starts:
                segments.append(Segment(starts.pop(0), ts, name, concept_for(name)))
            else:
                violations.append(f"unpaired end marker {label!r} at {ts}")
        else:
            segments.append(Segment(ts, ts, label, concept_for(label)))
    for name, starts in sorted(open_begins.items()):
        for start in starts:
            segments.append(Segment(start, max(track_end, start), name, concept_for(name)))
    segments.sort(key=lambda s: (s.start, s.end, s.label))
    return AnnotationTier(tier_name, ontology_namespace, tuple(segments)), violations


# -- resampling -------------------------------------------------------------

def resample_to_nominal(track: SignalTrack, target_rate: float) -> SignalTrack:
    """Linear interpolation onto the uniform grid spanning the track's time range.

    Endpoints are clamped; the grid never extrapolates past the recorded
    range.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be > 0")
    if track.info.value_format not in (ValueFormat.F32, ValueFormat.F64):
        raise NonNumericTrack(track.info.uid)
    if not track.samples:
        return replace(track, info=replace(track.info, nominal_rate=target_rate))
    times = np.array([s[0] for s in track.samples])
    values = np.array([s[1] for s in track.samples], dtype=float)
    n = int(math.floor((times[-1] - times[0]) * target_rate)) + 1
    grid = times[0] + np.arange(n) / target_rate
    out = np.column_stack([np.interp(grid, times, values[:, c])
                           for c in range(values.shape[1])])
    samples = tuple((float(t), tuple(float(v) for v in row))
                    for t, row in zip(grid, out))
    return SignalTrack(replace(track.info, nominal_rate=target_rate), samples)


# -- replay -----------------------------------------------------------------

class ReplaySession:
    """Re-emit a document's tracks live through fresh outlets.

    Outlets exist as soon as the session is constructed, so consumers can
    subscribe before `run` starts emitting. Relative timing is scaled by
    1/speed; values are pushed bit-identically to what was stored.
    """

    def __init__(self, doc: PartiturDocument, hub: StreamHub, speed: float = 1.0):
        if speed <= 0:
            raise ValueError("speed must be > 0")
        if not doc.signal_tracks or not any(t.samples for t in doc.signal_tracks):
            raise EmptyDocument(doc.session_id)
        self.doc = doc
        self.speed = speed
        self.outlets = {t.info.uid: hub.create_outlet(t.info) for t in doc.signal_tracks}
        self._merged: list[tuple[float, str, tuple]] = sorted(
            (ts, track.info.uid, vals)
            for track in doc.signal_tracks for ts, vals in track.samples)

    def run(self, clock: Callable[[], float] = time.monotonic,
            sleep: Callable[[float], None] = time.sleep) -> None:
        """Blocks until the last sample is out, then closes the outlets."""
        origin = self.doc.origin_common_time
        start = clock()
        for ts, uid, vals in self._merged:
            due = start + (ts - origin) / self.speed
            delay = due - clock()
            if delay > 0:
                sleep(delay)
            self.outlets[uid].push_chunk(Chunk(uid, ((due, vals),)))
        for outlet in self.outlets.values():
            outlet.close()


def replay(doc: PartiturDocument, hub: StreamHub, speed: float = 1.0) -> None:
    """One-shot convenience: build a ReplaySession and run it to completion."""
    ReplaySession(doc, hub, speed).run()

"""Control API: JSON over HTTP plus a server-sent event stream, under /v1.

The operator console is a pure projection of this API: stream list, link
metrics, session state, and an event stream with monotonically
increasing sequence numbers for gap detection.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from .errors import IllegalTransition, InsufficientData
from .netshell import SocketNode
from .session import (Lab, ROLE_TABLE, SessionSpec, SessionState, State,
                      achievable_lll, authorize_event, denial_reason,
                      transition, validate_session)
from .streams import StreamInfo, StreamKind, ValueFormat, make_chunk

EVENT_LOG_LIMIT = 1000


class Coordinator:
    """Owns session state and the control-event marker stream for one node."""

    def __init__(self, node: SocketNode):
        self.node = node
        self.spec: SessionSpec | None = None
        self.state = SessionState()
        self._lock = threading.Lock()
        self._seq = 0
        self._listeners: list[queue.Queue] = []
        self.event_log: list[dict] = []
        self._marker_outlet = node.create_outlet(StreamInfo(
            uid=_stable_uid(f"control-events/{node.endpoint}"),
            name="control-events", kind=StreamKind.MARKER, channel_count=1,
            nominal_rate=0.0, value_format=ValueFormat.UTF8, units=("",),
            lab_id=node.config.lab_id))

    # -- event stream ---------------------------------------------------------

    def listen(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=500)
        with self._lock:
            self._listeners.append(q)
        return q

    def unlisten(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._listeners:
                self._listeners.remove(q)

    def publish(self, kind: str, data: dict) -> dict:
        with self._lock:
            self._seq += 1
            message = {"seq": self._seq, "kind": kind, "at": time.time(), **data}
            self.event_log.append(message)
            del self.event_log[:-EVENT_LOG_LIMIT]
            listeners = list(self._listeners)
        for q in listeners:
            try:
                q.put_nowait(message)
            except queue.Full:
                pass
        return message

    # -- session --------------------------------------------------------------

    def set_spec(self, spec: SessionSpec) -> list:
        violations = validate_session(spec)
        if not violations:
            self.spec = spec
            self.state = SessionState(State.CREATED, time.time())
            self.publish("session", {"state": self.state.state.value,
                                     "session_id": spec.session_id})
        return violations

    def apply_transition(self, event: str) -> SessionState:
        self.state = transition(self.state, event, at=time.time())
        self.publish("session", {"state": self.state.state.value, "event": event})
        return self.state

    def submit_event(self, participant_id: str, label: str) -> tuple[bool, str]:
        """Authorize against the participant's role and emit a marker on success."""
        if self.spec is None:
            return False, "no session loaded"
        participant = next((p for p in self.spec.participants
                            if p.participant_id == participant_id), None)
        if participant is None:
            return False, f"unknown participant {participant_id!r}"
        attrs = ROLE_TABLE[participant.role]
        if not authorize_event(attrs, "control"):
            return False, denial_reason(attrs, "control")
        self._marker_outlet.push_chunk(make_chunk(
            self._marker_outlet.info.uid, [(math.nan, (label,))]))
        self.publish("control_event", {"participant_id": participant_id,
                                       "label": label,
                                       "role": participant.role.value})
        return True, "accepted"

    # -- snapshots ------------------------------------------------------------

    def streams_snapshot(self) -> list[dict]:
        with self.node._lock:
            return [i.to_json_dict() for i in self.node.node.resolve()]

    def metrics_snapshot(self) -> dict:
        links = {}
        with self.node._lock:
            peers = list(self.node.node.links)
        for peer in peers:
            try:
                links[peer] = self.node.measure(peer, window=60.0).to_json_dict()
            except InsufficientData:
                links[peer] = None
        labs = self.spec.labs if self.spec else (Lab(self.node.config.lab_id),)
        metrics_by_link = {("self", peer): (None if m is None else _metrics_from(m))
                           for peer, m in links.items()}
        return {
            "links": links,
            "achievable_lll": achievable_lll(metrics_by_link, tuple(labs),
                                             self.node.config.thresholds),
            "target_lll": self.spec.target_lll if self.spec else None,
        }

    def session_snapshot(self) -> dict:
        return {
            "state": self.state.state.value,
            "entered_at": self.state.entered_at,
            "spec": self.spec.to_json_dict() if self.spec else None,
        }


def _metrics_from(d: dict):
    from .transport import LinkMetrics
    return LinkMetrics(**d)


def _stable_uid(key: str) -> str:
    import hashlib
    return hashlib.md5(key.encode()).hexdigest()


def build_app(coordinator: Coordinator) -> FastAPI:
    app = FastAPI(title="lablink control API", version="1")

    @app.get("/v1/streams")
    def get_streams():
        return coordinator.streams_snapshot()

    @app.get("/v1/metrics")
    def get_metrics():
        return coordinator.metrics_snapshot()

    @app.get("/v1/session")
    def get_session():
        return coordinator.session_snapshot()

    @app.post("/v1/session")
    def post_session(spec: dict):
        try:
            parsed = SessionSpec.from_json_dict(spec)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        violations = coordinator.set_spec(parsed)
        if violations:
            raise HTTPException(status_code=422,
                                detail=[str(v) for v in violations])
        return coordinator.session_snapshot()

    @app.post("/v1/session/transition")
    def post_transition(body: dict):
        event = body.get("event", "")
        try:
            state = coordinator.apply_transition(event)
        except IllegalTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"state": state.state.value, "entered_at": state.entered_at}

    @app.post("/v1/event")
    def post_event(body: dict):
        participant_id = body.get("participant_id", "")
        label = body.get("label", "")
        ok, reason = coordinator.submit_event(participant_id, label)
        if not ok:
            raise HTTPException(status_code=403, detail=reason)
        return {"status": "accepted", "participant_id": participant_id,
                "label": label}

    @app.get("/v1/events")
    def get_events():
        q = coordinator.listen()

        def stream():
            try:
                hello = {"seq": 0, "kind": "hello", "at": time.time()}
                yield f"data: {json.dumps(hello)}\n\n"
                while True:
                    try:
                        message = q.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"id: {message['seq']}\ndata: {json.dumps(message)}\n\n"
            finally:
                coordinator.unlisten(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app

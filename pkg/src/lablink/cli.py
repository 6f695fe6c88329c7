"""Command line front end.

Exit codes: 0 on success, 1 when the requested operation reports
violations or finds nothing to act on, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
import urllib.error
import urllib.request
from dataclasses import replace as dc_replace
from pathlib import Path

from . import recorder, scenarios
from .api import Coordinator, build_app
from .config import load_config
from .errors import EmptyDocument, LabLinkError, UnknownScenario
from .netshell import SocketNode
from .session import SessionSpec, validate_session
from .streams import (Chunk, StreamKind, SyntheticSpec, Waveform, synthesize_signal,
                      synthetic_stream_info)


def _node_from_args(args) -> SocketNode:
    overrides = {
        "lab_id": getattr(args, "lab_id", None),
        "port": getattr(args, "port", None),
        "peers": tuple(args.peer) if getattr(args, "peer", None) else None,
    }
    config = load_config(overrides, config_file=getattr(args, "config", None))
    return SocketNode(config)


def _match_predicate(args):
    def predicate(info):
        if args.kind and info.kind.value != args.kind:
            return False
        if args.name and info.name != args.name:
            return False
        return True
    return predicate


# -- subcommands -------------------------------------------------------------

def cmd_discover(args) -> int:
    with _node_from_args(args) as node:
        infos = node.discover(_match_predicate(args), wait=args.wait)
    if args.json:
        print(json.dumps([i.to_json_dict() for i in infos], sort_keys=True))
    else:
        for info in infos:
            endpoint = info.metadata_dict.get("endpoint", "-")
            print(f"{info.name}\t{info.kind.value}\t{info.lab_id}\t"
                  f"{info.channel_count}ch\t{endpoint}\t{info.uid}")
    return 0 if infos else 1


def cmd_stream(args) -> int:
    spec = SyntheticSpec(waveform=Waveform(args.waveform), rate=args.rate,
                         channels=args.channels, amplitude=args.amplitude,
                         frequency=args.frequency, seed=args.seed)
    with _node_from_args(args) as node:
        info = synthetic_stream_info(spec, lab_id=node.config.lab_id,
                                     name=args.name)
        outlet = node.create_outlet(info)
        print(f"streaming {outlet.info.name} ({outlet.info.uid}) "
              f"on {node.endpoint}", file=sys.stderr)
        chunk_size = max(1, int(spec.rate / 10))  # roughly 100 ms per chunk
        for chunk in synthesize_signal(spec, args.duration,
                                       chunk_size=chunk_size, t0=time.time()):
            wait = chunk.samples[0][0] - time.time()
            if wait > 0:
                time.sleep(wait)
            # the generator stamps the spec's default uid; ours folds in lab_id
            outlet.push_chunk(Chunk(info.uid, chunk.samples))
        if args.linger > 0:
            time.sleep(args.linger)
        outlet.close()
    return 0


def cmd_record(args) -> int:
    deadline = time.time() + args.wait
    with _node_from_args(args) as node:
        predicate = _match_predicate(args)
        infos = []
        while time.time() < deadline and not infos:
            infos = node.discover(predicate, wait=0.3)
        if not infos:
            print("no matching streams found", file=sys.stderr)
            return 1
        inlets = [node.subscribe(i, lossless=True) for i in infos]
        stop_at = time.time() + args.duration
        doc = recorder.record_to_partitur(
            inlets, lambda: time.time() >= stop_at,
            session_id=args.session_id)
    Path(args.out).write_bytes(recorder.write_partitur(doc))
    total = sum(len(t.samples) for t in doc.signal_tracks)
    print(f"wrote {args.out}: {len(doc.signal_tracks)} tracks, "
          f"{total} samples, {doc.duration:.3f}s", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    doc = recorder.read_partitur(Path(args.file).read_bytes())
    with _node_from_args(args) as node:
        doc = _advertise(doc, node.endpoint)
        try:
            session = recorder.ReplaySession(doc, node.hub, speed=args.speed)
        except EmptyDocument:
            print("document has no samples to replay", file=sys.stderr)
            return 1
        for track in doc.signal_tracks:
            node.node.register_stream(track.info)
        if args.lead_in > 0:
            time.sleep(args.lead_in)
        session.run()
        if args.linger > 0:
            time.sleep(args.linger)
    return 0


def _advertise(doc, endpoint: str):
    """Stamp the replaying node's endpoint into every track's metadata."""
    tracks = []
    for track in doc.signal_tracks:
        meta = dict(track.info.metadata_dict)
        meta["endpoint"] = endpoint
        info = dc_replace(track.info, metadata=tuple(sorted(meta.items())))
        tracks.append(dc_replace(track, info=info))
    return dc_replace(doc, signal_tracks=tuple(tracks))


TEMPLATE_SPEC = {
    "session_id": "demo",
    "target_lll": 3,
    "labs": [{"lab_id": "lab-a", "immersion_capable": False},
             {"lab_id": "lab-b", "immersion_capable": False}],
    "participants": [
        {"participant_id": "p1", "lab_id": "lab-a", "role": "Interactor"},
        {"participant_id": "p2", "lab_id": "lab-b", "role": "Interactor"},
        {"participant_id": "op", "lab_id": "lab-b", "role": "Controller"},
    ],
    "feedback_rules": [],
    "stream_bindings": {},
}


def cmd_session(args) -> int:
    if args.action == "create":
        spec = SessionSpec.from_json_dict(TEMPLATE_SPEC)
        text = json.dumps(spec.to_json_dict(), indent=2) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            print(text, end="")
        return 0

    if args.action == "validate":
        if not args.file:
            print("session validate requires a spec file", file=sys.stderr)
            return 2
        spec = SessionSpec.from_json_dict(json.loads(Path(args.file).read_text()))
        violations = validate_session(spec)
        if args.json:
            print(json.dumps([{"kind": v.kind, "detail": v.detail}
                              for v in violations], sort_keys=True))
        else:
            for v in violations:
                print(f"{v.kind}: {v.detail}")
            if not violations:
                print("ok")
        return 1 if violations else 0

    # start / stop / status operate against a running serve node
    base = args.api.rstrip("/")
    if args.action == "status":
        print(json.dumps(_http(base + "/v1/session"), sort_keys=True))
        return 0
    if args.action == "stop":
        _http(base + "/v1/session/transition", {"event": "stop"})
        print("stopped")
        return 0
    if args.action == "start":
        if args.file:
            spec = json.loads(Path(args.file).read_text())
            _http(base + "/v1/session", spec)
        advance = {"Created": "assign_roles", "RolesAssigned": "calibrated",
                   "Calibrating": "calibrated", "Ready": "start"}
        for _ in range(8):
            state = _http(base + "/v1/session")["state"]
            if state == "Running":
                print("running")
                return 0
            _http(base + "/v1/session/transition", {"event": advance[state]})
        print("could not reach running state", file=sys.stderr)
        return 1
    return 2


def _http(url: str, body: dict | None = None) -> dict:
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10.0) as resp:
        return json.loads(resp.read())


def cmd_simulate(args) -> int:
    try:
        result = scenarios.run_scenario(args.scenario, seed=args.seed)
    except UnknownScenario as exc:
        print(f"unknown scenario: {exc}", file=sys.stderr)
        return 2
    if args.report:
        Path(args.report).write_text(result.report_json())
    else:
        print(result.report_json(), end="")
    if args.trace:
        Path(args.trace).write_text(result.trace)
    if args.partitur:
        Path(args.partitur).write_bytes(recorder.write_partitur(result.partitur))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    node = _node_from_args(args).start()
    coordinator = Coordinator(node)
    if args.session:
        spec = SessionSpec.from_json_dict(json.loads(Path(args.session).read_text()))
        violations = coordinator.set_spec(spec)
        if violations:
            for v in violations:
                print(f"{v.kind}: {v.detail}", file=sys.stderr)
            node.close()
            return 1
    if args.scenario == "food_choice":
        _start_food_choice_demo(node, coordinator)
    app = build_app(coordinator)
    print(f"node {node.endpoint}, control API on "
          f"http://{args.api_host}:{args.api_port}", file=sys.stderr)
    try:
        uvicorn.run(app, host=args.api_host, port=args.api_port,
                    log_level="warning")
    finally:
        node.close()
    return 0


DEMO_SPEC = {
    "session_id": "food-choice-live",
    "target_lll": 3,
    "labs": [{"lab_id": "lab-a", "immersion_capable": False},
             {"lab_id": "lab-b", "immersion_capable": False}],
    "participants": [
        {"participant_id": "acting", "lab_id": "lab-a", "role": "Interactor"},
        {"participant_id": "coach", "lab_id": "lab-b", "role": "Controller"},
        {"participant_id": "display", "lab_id": "lab-a", "role": "Executor"},
        {"participant_id": "watcher", "lab_id": "lab-b", "role": "Observer"},
    ],
    "feedback_rules": [],
    "stream_bindings": {},
}


def _start_food_choice_demo(node: SocketNode, coordinator: Coordinator) -> None:
    """Live variant of the food choice run: items appear every two seconds."""
    from .streams import StreamInfo, ValueFormat, make_chunk
    import hashlib
    import math

    coordinator.set_spec(SessionSpec.from_json_dict(DEMO_SPEC))
    for event in ("assign_roles", "calibrated", "calibrated", "start"):
        coordinator.apply_transition(event)
    info = StreamInfo(
        uid=hashlib.md5(f"live-presentations/{node.endpoint}".encode()).hexdigest(),
        name="item-presentations", kind=StreamKind.MARKER, channel_count=1,
        nominal_rate=0.0, value_format=ValueFormat.UTF8, units=("",),
        lab_id=node.config.lab_id)
    outlet = node.create_outlet(info)

    def present():
        i = 0
        while not node._stop.is_set() and not outlet.closed:
            pair = scenarios.FOOD_ITEM_PAIRS[i % len(scenarios.FOOD_ITEM_PAIRS)]
            outlet.push_chunk(make_chunk(
                info.uid, [(math.nan, (f"{i}:{pair[0]} vs {pair[1]}",))]))
            coordinator.publish("presentation", {"item": i,
                                                 "label": f"{pair[0]} vs {pair[1]}"})
            i += 1
            node._stop.wait(2.0)

    threading.Thread(target=present, daemon=True).start()


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lablink", description="interconnect experiment streams")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--lab-id", help="lab identifier for this node")
    parser.add_argument("--port", type=int, help="UDP/TCP port to bind")
    parser.add_argument("--peer", action="append",
                        help="host:port to announce to (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="list visible streams")
    p.add_argument("--wait", type=float, default=2.0)
    p.add_argument("--kind", choices=[k.value for k in StreamKind])
    p.add_argument("--name")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("stream", help="publish a synthetic stream")
    p.add_argument("--waveform", default="sine",
                   choices=[w.value for w in Waveform])
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--frequency", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--linger", type=float, default=1.0,
                   help="seconds to keep the node alive after the last chunk")
    p.add_argument("--name")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("record", help="record visible streams to a file")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--wait", type=float, default=5.0,
                   help="max seconds to wait for a matching stream")
    p.add_argument("--kind", choices=[k.value for k in StreamKind])
    p.add_argument("--name")
    p.add_argument("--session-id", default="session")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="re-emit a recorded file as live streams")
    p.add_argument("file")
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--lead-in", type=float, default=1.5,
                   help="announce period before the first sample")
    p.add_argument("--linger", type=float, default=1.0)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("session", help="create, validate, or drive a session")
    p.add_argument("action",
                   choices=["create", "validate", "start", "stop", "status"])
    p.add_argument("file", nargs="?")
    p.add_argument("--out")
    p.add_argument("--api", default="http://127.0.0.1:8800")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("simulate", help="run a deterministic scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the report here instead of stdout")
    p.add_argument("--trace", help="write the JSONL event trace here")
    p.add_argument("--partitur", help="write the recorded document here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run a node with the control API")
    p.add_argument("--api-host", default="127.0.0.1")
    p.add_argument("--api-port", type=int, default=8800)
    p.add_argument("--session", help="session spec file to load on startup")
    p.add_argument("--scenario", choices=["food_choice"],
                   help="also run a live demo scenario")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, urllib.error.URLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LabLinkError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
